use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use qseq::ansatz::{Horizon, ModelDocument, ModelKind, SequenceModel};
use qseq::gradtrain::{
    exact_gradient, expected_cost, finite_difference, gradient_landscape_scan, model_table, random_theta,
    stochastic_shift_gradient, train, CostWeights, GradientMode, HistoryRow, TrainConfig,
};
use qseq::metrics::{co_emission, kl_rate};
use qseq::rng;
use qseq::stochproc::{
    count_windows, sample_trajectory, true_conditional, uniform_renewal, ConditionalTable, HiddenMarkovModel,
    Trajectory,
};

use crate::output::{emit, float, write_csv};
use crate::Failure;

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Built-in process family (`renewal`)
    #[arg(long, default_value = "renewal")]
    pub process: String,
    /// Order N of the built-in process
    #[arg(long)]
    pub order: Option<usize>,
    /// Hidden Markov model JSON to use instead of a built-in family
    #[arg(long, value_name = "FILE")]
    pub hmm: Option<PathBuf>,
}

impl ProcessArgs {
    fn is_given(&self) -> bool {
        self.order.is_some() || self.hmm.is_some()
    }

    fn build(&self) -> Result<HiddenMarkovModel> {
        if let Some(path) = &self.hmm {
            return HiddenMarkovModel::load(path).with_context(|| format!("loading {}", path.display()));
        }
        match self.process.as_str() {
            "renewal" => {
                let Some(order) = self.order else { bail!("--order is required for the renewal process") };
                Ok(uniform_renewal(order)?)
            }
            other => bail!("unknown process {other:?}; use `renewal` or --hmm"),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps_adam: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Stop when the distortion changes by less than this between epochs
    #[arg(long)]
    pub eps_stop: Option<f64>,
    /// Use sampled gradients with this many draws per slot instead of exact ones
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainFlags {
    fn config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            eps_adam: self.eps_adam.unwrap_or(d.eps_adam),
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            eps_stop: self.eps_stop.unwrap_or(d.eps_stop),
            mode: self.samples.map_or(GradientMode::Exact, GradientMode::Stochastic),
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn list<T: std::str::FromStr>(name: &str, text: &str) -> Result<Vec<T>> {
    let items = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| anyhow::anyhow!("--{name}: cannot parse {s:?}")))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        bail!("--{name} must list at least one value");
    }
    Ok(items)
}

fn model_kinds(text: &str) -> Result<Vec<ModelKind>> {
    list::<String>("models", text)?.iter().map(|s| Ok(ModelKind::parse(s)?)).collect()
}

fn history_row(row: &HistoryRow) -> Vec<String> {
    vec![
        row.epoch.to_string(),
        float(row.cost_nats),
        float(row.kl_true_nats),
        float(row.kl_emp_nats),
        float(row.grad_norm),
    ]
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let traj = sample_trajectory(&a.process.build()?, a.length, a.seed)?;
    emit(a.out.as_deref(), &(traj.to_text() + "\n"))
}

#[derive(Debug, Args)]
pub struct CountsArgs {
    #[arg(long, value_name = "FILE")]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub past: usize,
    #[arg(long, default_value_t = 1)]
    pub future: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn counts(a: &CountsArgs) -> Result<()> {
    let traj = Trajectory::load(&a.trajectory).with_context(|| format!("loading {}", a.trajectory.display()))?;
    let table = count_windows(&traj, a.past, a.future)?;
    emit(a.out.as_deref(), &(table.to_json()? + "\n"))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Empirical conditional table from `counts`
    #[arg(long, value_name = "FILE")]
    pub counts: PathBuf,
    #[arg(long, default_value = "recurrent1")]
    pub model: String,
    /// True process for the kl_true column (optional)
    #[command(flatten)]
    pub truth: ProcessArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Trained model JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch history CSV; the best row is repeated last
    #[arg(long)]
    pub history: Option<PathBuf>,
}

fn load_table(path: &Path) -> Result<ConditionalTable> {
    ConditionalTable::load(path).with_context(|| format!("loading {}", path.display()))
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let reference = load_table(&a.counts)?;
    let kind = ModelKind::parse(&a.model)?;
    let model = kind.build(Horizon::new(reference.past_len(), reference.future_len())?)?;
    let truth = if a.truth.is_given() {
        Some(true_conditional(&a.truth.build()?, reference.past_len(), reference.future_len())?)
    } else {
        None
    };
    let result = train(&model, &reference, truth.as_ref(), &a.train.config()?)?;
    ModelDocument::new(kind, &model, &result.theta)?.save(&a.out)?;
    if let Some(path) = &a.history {
        let mut rows: Vec<Vec<String>> = result.history.iter().map(history_row).collect();
        rows.push(history_row(&result.best));
        write_csv(path, &["epoch", "cost_nats", "kl_true_nats", "kl_emp_nats", "grad_norm"], &rows)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Evaluate against this table; otherwise against the process given by --order/--hmm
    #[arg(long, value_name = "FILE")]
    pub counts: Option<PathBuf>,
    #[command(flatten)]
    pub process: ProcessArgs,
    /// `kl` or `coemission`
    #[arg(long, default_value = "kl")]
    pub metric: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let doc = ModelDocument::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let (model, theta) = doc.to_model()?;
    let h = model.horizon();
    let reference = match (&a.counts, a.process.is_given()) {
        (Some(path), false) => load_table(path)?,
        (None, true) => true_conditional(&a.process.build()?, h.past, h.future)?,
        _ => bail!("give exactly one of --counts or a process (--order / --hmm)"),
    };
    let table = model_table(&model, &theta, reference.past_len(), reference.future_len())?;
    let report = match a.metric.as_str() {
        "kl" => kl_rate(&reference, &table)?,
        "coemission" => co_emission(&reference, &table)?,
        other => bail!("unknown metric {other:?}; use kl or coemission"),
    };
    emit(a.out.as_deref(), &(report.to_json()? + "\n"))
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Model kind, or a model JSON whose circuit is checked
    #[arg(long, default_value = "recurrent1")]
    pub model: String,
    #[arg(long, default_value_t = 3)]
    pub past: usize,
    #[arg(long, default_value_t = 1)]
    pub future: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum allowed |exact - finite difference|
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Draws per stochastic estimate
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct GradcheckReport {
    model: String,
    slots: usize,
    trials: usize,
    tol: f64,
    max_fd_error: f64,
    stochastic_within_4se: usize,
    pass: bool,
}

fn resolve_model(name: &str, horizon: Horizon) -> Result<SequenceModel> {
    match ModelKind::parse(name) {
        Ok(kind) => Ok(kind.build(horizon)?),
        Err(_) if Path::new(name).is_file() => Ok(ModelDocument::load(Path::new(name))?.to_model()?.0),
        Err(e) => Err(e.into()),
    }
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let model = resolve_model(&a.model, Horizon::new(a.past, a.future)?)?;
    let bits = model.string_bits();
    let mut worst = 0.0f64;
    let mut within = 0;
    for trial in 0..a.trials as u64 {
        let mut r = rng::stream(a.seed, &[trial]);
        let theta = random_theta(model.num_slots(), &mut r);
        let w = CostWeights::from_vec(bits, (0..1 << bits).map(|_| r.gen_range(-1.0..1.0)).collect())?;
        let g = exact_gradient(&model, &theta, &w)?;
        let fd = finite_difference(|t| expected_cost(&model, t, &w), &theta, 1e-5)?;
        worst = g.iter().zip(&fd).map(|(x, y)| (x - y).abs()).fold(worst, f64::max);
        let slot = r.gen_range(0..model.num_slots());
        let est = stochastic_shift_gradient(&model, &theta, &w, slot, a.samples, &mut rng::stream(a.seed, &[trial, 1]))?;
        within += usize::from((est.value - g[slot]).abs() <= 4.0 * est.std_error);
    }
    let report = GradcheckReport {
        model: a.model.clone(),
        slots: model.num_slots(),
        trials: a.trials,
        tol: a.tol,
        max_fd_error: worst,
        stochastic_within_4se: within,
        pass: worst <= a.tol && within == a.trials,
    };
    emit(a.out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
    if !report.pass {
        return Err(Failure("gradient check failed".into()).into());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GradscanArgs {
    /// Comma-separated model kinds
    #[arg(long, default_value = "recurrent1,born")]
    pub models: String,
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long, default_value_t = 8)]
    pub past: usize,
    #[arg(long, default_value_t = 1)]
    pub future: usize,
    #[arg(long, default_value_t = 100)]
    pub inits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gradscan(a: &GradscanArgs) -> Result<()> {
    let kinds = model_kinds(&a.models)?;
    let reference = true_conditional(&a.process.build()?, a.past, a.future)?;
    let horizon = Horizon::new(a.past, a.future)?;
    let scans = kinds
        .par_iter()
        .map(|k| Ok(gradient_landscape_scan(&k.build(horizon)?, &reference, a.inits, a.seed)?))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (kind, mags) in kinds.iter().zip(&scans) {
        for (i, m) in mags.iter().enumerate() {
            rows.push(vec![kind.name().to_string(), i.to_string(), float(*m)]);
        }
    }
    write_csv(&a.out, &["model", "init", "grad_magnitude"], &rows)
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Comma-separated renewal orders
    #[arg(long, default_value = "3,4,5,6,7,8")]
    pub orders: String,
    /// Comma-separated training lengths T
    #[arg(long, default_value = "50000")]
    pub sizes: String,
    #[arg(long, default_value = "recurrent1,recurrent2,born")]
    pub models: String,
    /// Replicas per (order, T, model) cell
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 8)]
    pub past: usize,
    #[arg(long, default_value_t = 1)]
    pub future: usize,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Results CSV; run settings are written next to it as `<out>.meta.json`
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct BenchmarkMeta<'a> {
    orders: &'a [usize],
    sizes: &'a [usize],
    models: Vec<&'static str>,
    seeds_per_cell: usize,
    past_len: usize,
    future_len: usize,
    train: &'a TrainConfig,
}

struct Cell {
    order: usize,
    size: usize,
    kind: ModelKind,
    replica: usize,
}

fn kind_code(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Recurrent1 => 1,
        ModelKind::Recurrent2 => 2,
        ModelKind::Born => 3,
        ModelKind::Recurrent => 4,
        ModelKind::Template => 5,
    }
}

fn run_cell(cell: &Cell, base: &TrainConfig, horizon: Horizon) -> Result<(usize, HistoryRow, usize)> {
    let hmm = uniform_renewal(cell.order)?;
    let (order, size, replica) = (cell.order as u64, cell.size as u64, cell.replica as u64);
    // models in the same (order, T, replica) share one training string
    let data_seed = rng::derive_seed(base.seed, &[order, size, replica]);
    let counts = count_windows(&sample_trajectory(&hmm, cell.size, data_seed)?, horizon.past, horizon.future)?;
    let truth = true_conditional(&hmm, horizon.past, horizon.future)?;
    let model = cell.kind.build(horizon)?;
    let cfg = TrainConfig { seed: rng::derive_seed(base.seed, &[order, size, kind_code(cell.kind), replica]), ..base.clone() };
    let result = train(&model, &counts, Some(&truth), &cfg)?;
    Ok((model.num_slots(), result.best, result.history.len()))
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let orders = list::<usize>("orders", &a.orders)?;
    let sizes = list::<usize>("sizes", &a.sizes)?;
    let kinds = model_kinds(&a.models)?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let horizon = Horizon::new(a.past, a.future)?;
    let base = a.train.config()?;
    let mut cells = Vec::new();
    for &order in &orders {
        for &size in &sizes {
            for &kind in &kinds {
                for replica in 0..a.seeds {
                    cells.push(Cell { order, size, kind, replica });
                }
            }
        }
    }
    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|cell| {
            let start = Instant::now();
            let outcome = run_cell(cell, &base, horizon);
            let wall = format!("{:.3}", start.elapsed().as_secs_f64());
            let mut row = vec![cell.order.to_string(), cell.size.to_string(), cell.kind.name().into(), cell.replica.to_string()];
            match outcome {
                Ok((params, best, epochs)) => row.extend([
                    params.to_string(),
                    float(best.kl_emp_nats),
                    float(best.kl_true_nats),
                    float(best.cost_nats),
                    epochs.to_string(),
                    wall,
                    "ok".into(),
                ]),
                Err(e) => row.extend([
                    String::new(),
                    float(f64::NAN),
                    float(f64::NAN),
                    float(f64::NAN),
                    "0".into(),
                    wall,
                    format!("failed: {e:#}"),
                ]),
            }
            row
        })
        .collect();
    write_csv(
        &a.out,
        &[
            "order",
            "T",
            "model",
            "replica",
            "params",
            "kl_empirical_nats",
            "kl_true_nats",
            "coemission_nats",
            "epochs",
            "wall_seconds",
            "status",
        ],
        &rows,
    )?;
    let meta = BenchmarkMeta {
        orders: &orders,
        sizes: &sizes,
        models: kinds.iter().map(|k| k.name()).collect(),
        seeds_per_cell: a.seeds,
        past_len: a.past,
        future_len: a.future,
        train: &base,
    };
    let mut meta_path = a.out.clone().into_os_string();
    meta_path.push(".meta.json");
    emit(Some(Path::new(&meta_path)), &(serde_json::to_string_pretty(&meta)? + "\n"))
}
