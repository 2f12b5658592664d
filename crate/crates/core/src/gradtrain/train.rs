use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::SequenceModel;
use crate::error::{invalid, QseqError, Result};
use crate::metrics;
use crate::rng;
use crate::stochproc::ConditionalTable;

use super::distortion::{distortion_gradient, distortion_gradient_stochastic, model_table};

/// How gradients are obtained during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Full enumeration of the shifted distributions.
    Exact,
    /// Sampled parameter-shift estimates with this many draws per slot.
    Stochastic(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_epochs: usize,
    /// Stop once the distortion changes by less than this between epochs.
    pub eps_stop: f64,
    pub mode: GradientMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_epochs: 2000,
            eps_stop: 1e-6,
            mode: GradientMode::Exact,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return invalid("ADAM decay rates must lie in (0, 1)");
        }
        if !(self.eps_stop > 0.0) || !(self.learning_rate > 0.0) || !(self.eps_adam > 0.0) {
            return invalid("learning rate, ADAM epsilon and stopping tolerance must be positive");
        }
        if self.max_epochs == 0 {
            return invalid("max_epochs must be at least 1");
        }
        if self.mode == GradientMode::Stochastic(0) {
            return invalid("stochastic mode needs at least one sample");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step_count: 0 }
    }
}

/// One bias-corrected ADAM descent step.
pub fn adam_step(theta: &[f64], gradient: &[f64], state: &mut AdamState, config: &TrainConfig) -> Result<Vec<f64>> {
    if theta.len() != gradient.len() || theta.len() != state.first_moment.len() {
        return invalid("parameter, gradient and ADAM state sizes differ");
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    Ok(theta
        .iter()
        .zip(gradient)
        .zip(state.first_moment.iter_mut().zip(state.second_moment.iter_mut()))
        .map(|((th, g), (m, v))| {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            th - config.learning_rate * (*m / c1) / ((*v / c2).sqrt() + config.eps_adam)
        })
        .collect())
}

/// i.i.d. uniform angles on `[0, 2π)`.
pub fn random_theta<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.gen::<f64>() * TAU).collect()
}

/// Metrics of one evaluated parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    /// Co-emission distortion against the training table.
    pub cost_nats: f64,
    /// KL rate against the true table, NaN when none was supplied.
    pub kl_true_nats: f64,
    /// KL rate against the training table.
    pub kl_emp_nats: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    /// Best parameters seen, by training distortion.
    pub theta: Vec<f64>,
    pub best: HistoryRow,
    /// One row per epoch, in order.
    pub history: Vec<HistoryRow>,
    /// Whether the stopping tolerance was met before `max_epochs`.
    pub converged: bool,
}

/// Trains from uniformly random initial angles drawn from `config.seed`.
pub fn train(
    model: &SequenceModel,
    reference: &ConditionalTable,
    truth: Option<&ConditionalTable>,
    config: &TrainConfig,
) -> Result<TrainResult> {
    let theta0 = random_theta(model.num_slots(), &mut rng::stream(config.seed, &[0]));
    train_from(model, reference, truth, config, theta0)
}

/// Minimizes the co-emission distortion against `reference` with ADAM.
///
/// Every epoch evaluates the distortion and its gradient at the current
/// angles, records a history row, then steps. Training stops when two
/// consecutive distortions differ by less than `eps_stop`.
pub fn train_from(
    model: &SequenceModel,
    reference: &ConditionalTable,
    truth: Option<&ConditionalTable>,
    config: &TrainConfig,
    theta0: Vec<f64>,
) -> Result<TrainResult> {
    config.validate()?;
    model.check_theta(&theta0)?;
    if let Some(t) = truth {
        if t.past_len() != reference.past_len() || t.future_len() != reference.future_len() {
            return invalid("true and training tables have different horizons");
        }
    }
    let mut theta = theta0;
    let mut adam = AdamState::new(theta.len());
    let mut history: Vec<HistoryRow> = Vec::new();
    let mut best: Option<(HistoryRow, Vec<f64>)> = None;
    let mut converged = false;
    for epoch in 0..config.max_epochs {
        let step = match config.mode {
            GradientMode::Exact => distortion_gradient(model, &theta, reference)?,
            GradientMode::Stochastic(m) => {
                let seed = rng::derive_seed(config.seed, &[1, epoch as u64]);
                distortion_gradient_stochastic(model, &theta, reference, m, seed)?
            }
        };
        let row = evaluate(model, &theta, reference, truth, epoch, &step.gradient)?;
        if !row.cost_nats.is_finite() || !row.grad_norm.is_finite() {
            return Err(QseqError::Numerical(format!(
                "non-finite cost or gradient at epoch {epoch} (cost {}, |grad| {})",
                row.cost_nats, row.grad_norm
            )));
        }
        if best.as_ref().map_or(true, |(b, _)| row.cost_nats < b.cost_nats) {
            best = Some((row, theta.clone()));
        }
        let previous = history.last().map(|r| r.cost_nats);
        history.push(row);
        if previous.is_some_and(|p| (p - row.cost_nats).abs() < config.eps_stop) {
            converged = true;
            break;
        }
        if epoch + 1 < config.max_epochs {
            theta = adam_step(&theta, &step.gradient, &mut adam, config)?;
        }
    }
    let (best, theta) = best.expect("at least one epoch runs");
    Ok(TrainResult { theta, best, history, converged })
}

fn evaluate(
    model: &SequenceModel,
    theta: &[f64],
    reference: &ConditionalTable,
    truth: Option<&ConditionalTable>,
    epoch: usize,
    gradient: &[f64],
) -> Result<HistoryRow> {
    let table = model_table(model, theta, reference.past_len(), reference.future_len())?;
    let kl_true_nats = match truth {
        Some(t) => metrics::kl_rate(t, &table)?.value_nats,
        None => f64::NAN,
    };
    Ok(HistoryRow {
        epoch,
        cost_nats: metrics::co_emission(reference, &table)?.value_nats,
        kl_true_nats,
        kl_emp_nats: metrics::kl_rate(reference, &table)?.value_nats,
        grad_norm: gradient.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

/// Scores a parameter vector the way the training history does.
pub fn evaluate_theta(
    model: &SequenceModel,
    theta: &[f64],
    reference: &ConditionalTable,
    truth: Option<&ConditionalTable>,
) -> Result<HistoryRow> {
    let g = distortion_gradient(model, theta, reference)?;
    evaluate(model, theta, reference, truth, 0, &g.gradient)
}

/// Magnitudes `|∂D_A/∂θ_k|` at `num_inits` random initializations, each at
/// one uniformly chosen slot `k`. Initialization `i` uses the stream
/// `(seed, i)`.
pub fn gradient_landscape_scan(
    model: &SequenceModel,
    reference: &ConditionalTable,
    num_inits: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if num_inits == 0 {
        return invalid("at least one initialization is required");
    }
    (0..num_inits)
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let theta = random_theta(model.num_slots(), &mut r);
            let slot = r.gen_range(0..model.num_slots());
            Ok(distortion_gradient(model, &theta, reference)?.gradient[slot].abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_is_sign_sized() {
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(3);
        let next = adam_step(&[0.0, 1.0, 2.0], &[3.0, -0.2, 0.0], &mut st, &cfg).unwrap();
        assert!((next[0] + cfg.learning_rate).abs() < 1e-8);
        assert!((next[1] - 1.0 - cfg.learning_rate).abs() < 1e-8);
        assert_eq!(next[2], 2.0);
    }

    #[test]
    fn adam_steps_shrink_under_constant_gradient() {
        let cfg = TrainConfig::default();
        let mut st = AdamState::new(1);
        let mut theta = vec![0.0];
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let next = adam_step(&theta, &[0.7], &mut st, &cfg).unwrap();
            let step = (next[0] - theta[0]).abs();
            assert!(step <= last * (1.0 + 1e-9));
            last = step;
            theta = next;
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { eps_stop: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { mode: GradientMode::Stochastic(0), ..Default::default() }.validate().is_err());
    }
}
