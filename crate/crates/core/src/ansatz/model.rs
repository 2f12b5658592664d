use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kraus::{kraus_from_unitary, leaf_probabilities, tree_distribution, tree_levels, FlatKraus, KrausModel};
use super::CircuitTemplate;
use crate::error::{invalid, Result};
use crate::qsim::{append_fresh_qubit, StateVector};
use crate::stochproc::{ConditionalTable, TableRow};
use crate::{bits_to_index, index_to_bits};

/// Pasts whose model probability falls below this floor get a uniform
/// conditional and are flagged degenerate.
pub const EPS_PAST: f64 = 1e-12;

/// Past and future window lengths, in time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    pub past: usize,
    pub future: usize,
}

impl Horizon {
    pub fn new(past: usize, future: usize) -> Result<Self> {
        if future == 0 {
            return invalid("the future horizon must be at least one step");
        }
        Ok(Self { past, future })
    }

    pub fn total(&self) -> usize {
        self.past + self.future
    }
}

/// Named model families used by the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// One memory qubit, 8-parameter universal step.
    Recurrent1,
    /// Two memory qubits, 3-layer hardware-efficient step.
    Recurrent2,
    /// 4-layer hardware-efficient Born machine.
    Born,
    /// Any other recurrent step.
    Recurrent,
    /// Any other non-recurrent template.
    Template,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Recurrent1 => "recurrent1",
            ModelKind::Recurrent2 => "recurrent2",
            ModelKind::Born => "born",
            ModelKind::Recurrent => "recurrent",
            ModelKind::Template => "template",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "recurrent1" => Ok(ModelKind::Recurrent1),
            "recurrent2" => Ok(ModelKind::Recurrent2),
            "born" => Ok(ModelKind::Born),
            "recurrent" => Ok(ModelKind::Recurrent),
            "template" => Ok(ModelKind::Template),
            other => invalid(format!("unknown model kind {other:?}")),
        }
    }

    /// Builds the standard model of this kind for `horizon`.
    pub fn build(self, horizon: Horizon) -> Result<SequenceModel> {
        Ok(match self {
            ModelKind::Recurrent1 => SequenceModel::Recurrent(super::build_universal_1q_memory(horizon)?),
            ModelKind::Recurrent2 => SequenceModel::Recurrent(super::build_recurrent_hea(2, 3, horizon)?),
            ModelKind::Born => SequenceModel::Born(super::build_born_machine(4, horizon)?),
            other => return invalid(format!("{} has no standard builder", other.name())),
        })
    }

    /// Layer count of the standard builder.
    pub fn layers(self) -> usize {
        match self {
            ModelKind::Recurrent2 => 3,
            ModelKind::Born => 4,
            _ => 1,
        }
    }
}

/// Recurrent model: `step` acts on `memory_qubits` memory qubits (first) and
/// `output_qubits` fresh output qubits (last) at every time step.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentModel {
    memory_qubits: usize,
    output_qubits: usize,
    step: CircuitTemplate,
    horizon: Horizon,
}

impl RecurrentModel {
    pub fn new(memory_qubits: usize, output_qubits: usize, step: CircuitTemplate, horizon: Horizon) -> Result<Self> {
        if memory_qubits == 0 || output_qubits == 0 {
            return invalid("memory and output registers must be non-empty");
        }
        if step.num_qubits() != memory_qubits + output_qubits {
            return invalid(format!(
                "step acts on {} qubits but memory + output = {}",
                step.num_qubits(),
                memory_qubits + output_qubits
            ));
        }
        Ok(Self { memory_qubits, output_qubits, step, horizon })
    }

    pub fn memory_qubits(&self) -> usize {
        self.memory_qubits
    }

    pub fn output_qubits(&self) -> usize {
        self.output_qubits
    }

    pub fn step(&self) -> &CircuitTemplate {
        &self.step
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: Horizon) -> Self {
        Self { horizon, ..self.clone() }
    }

    fn initial_memory(&self) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); 1 << self.memory_qubits];
        v[0] = Complex64::new(1.0, 0.0);
        v
    }

    fn kraus_of(&self, step: &CircuitTemplate, theta: &[f64]) -> Result<KrausModel> {
        kraus_from_unitary(&step.unitary(theta)?, self.memory_qubits, self.output_qubits)
    }

    /// Distribution over strings of `steps` symbols via the Kraus branch tree.
    pub fn joint_distribution_steps(&self, theta: &[f64], steps: usize) -> Result<Vec<f64>> {
        let k = kraus_from_step(self, theta)?.flat();
        Ok(tree_distribution(&self.initial_memory(), &vec![&k; steps]))
    }

    /// The whole circuit for `steps` time steps as one template over
    /// `memory + steps·output` qubits, optionally with one gate shifted.
    pub fn unrolled_circuit(&self, steps: usize, shift: Option<Shift>) -> Result<CircuitTemplate> {
        let (m, o) = (self.memory_qubits, self.output_qubits);
        let mut gates = Vec::with_capacity(steps * self.step.gate_count());
        for t in 0..steps {
            let map: Vec<usize> = (0..m).chain((0..o).map(|j| m + t * o + j)).collect();
            let mut step_gates = self.step.remapped_gates(&map);
            if let Some(s) = shift.filter(|s| s.occurrence.step == t) {
                step_gates[s.occurrence.gate].offset += s.delta;
            }
            gates.extend(step_gates);
        }
        CircuitTemplate::new(m + steps * o, gates, self.step.num_slots())
    }

    /// Same distribution as [`Self::joint_distribution_steps`], computed by
    /// simulating the unrolled circuit on a growing state vector and tracing
    /// out the memory.
    pub fn joint_distribution_unrolled(&self, theta: &[f64], steps: usize) -> Result<Vec<f64>> {
        self.step.check_theta(theta)?;
        let (m, o) = (self.memory_qubits, self.output_qubits);
        let mut state = StateVector::zero_state(m)?;
        let per_step = self.step.gate_count();
        let circuit = self.unrolled_circuit(steps, None)?;
        for t in 0..steps {
            for _ in 0..o {
                state = append_fresh_qubit(&state)?;
            }
            // gates of step t only touch qubits < m + (t+1)·o, which all exist now
            let partial = CircuitTemplate::new(
                state.num_qubits(),
                circuit.gates()[t * per_step..(t + 1) * per_step].to_vec(),
                circuit.num_slots(),
            )?;
            partial.apply(&mut state, theta)?;
        }
        let outputs = 1usize << (steps * o);
        let mut dist = vec![0.0; outputs];
        for (i, a) in state.amplitudes().iter().enumerate() {
            dist[i % outputs] += a.norm_sqr();
        }
        Ok(dist)
    }
}

/// Non-recurrent template measured once; its qubits carry the past followed by the future.
#[derive(Debug, Clone, PartialEq)]
pub struct BornMachine {
    template: CircuitTemplate,
    horizon: Horizon,
}

impl BornMachine {
    pub fn new(template: CircuitTemplate, horizon: Horizon) -> Result<Self> {
        if template.num_qubits() != horizon.total() {
            return invalid(format!(
                "template has {} qubits but the horizon spans {} symbols",
                template.num_qubits(),
                horizon.total()
            ));
        }
        Ok(Self { template, horizon })
    }

    pub fn template(&self) -> &CircuitTemplate {
        &self.template
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }
}

/// One use of a parameter: gate `gate` of time step `step` (always 0 for
/// non-recurrent templates).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub step: usize,
    pub gate: usize,
}

/// An occurrence whose angle is displaced by `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub occurrence: Occurrence,
    pub delta: f64,
}

/// Either kind of trainable sampler.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceModel {
    Recurrent(RecurrentModel),
    Born(BornMachine),
}

impl SequenceModel {
    pub fn num_slots(&self) -> usize {
        self.template().num_slots()
    }

    /// The circuit holding the parameters: the step for recurrent models.
    pub fn template(&self) -> &CircuitTemplate {
        match self {
            SequenceModel::Recurrent(r) => r.step(),
            SequenceModel::Born(b) => b.template(),
        }
    }

    pub fn horizon(&self) -> Horizon {
        match self {
            SequenceModel::Recurrent(r) => r.horizon(),
            SequenceModel::Born(b) => b.horizon(),
        }
    }

    /// Bits per time step.
    pub fn symbol_bits(&self) -> usize {
        match self {
            SequenceModel::Recurrent(r) => r.output_qubits(),
            SequenceModel::Born(_) => 1,
        }
    }

    /// Length in bits of a full-horizon string.
    pub fn string_bits(&self) -> usize {
        self.horizon().total() * self.symbol_bits()
    }

    /// Total gate count of the measured circuit over the full horizon.
    pub fn circuit_gate_count(&self) -> usize {
        match self {
            SequenceModel::Recurrent(r) => r.step().gate_count() * r.horizon().total(),
            SequenceModel::Born(b) => b.template().gate_count(),
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        self.template().check_theta(theta)
    }

    /// Exact distribution over full-horizon strings.
    pub fn joint_distribution(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            SequenceModel::Recurrent(r) => r.joint_distribution_steps(theta, r.horizon().total()),
            SequenceModel::Born(b) => Ok(b.template().run(theta)?.probabilities()),
        }
    }

    /// Every use of parameter `slot` in the full-horizon circuit.
    pub fn occurrences(&self, slot: usize) -> Vec<Occurrence> {
        match self {
            SequenceModel::Recurrent(r) => {
                let gates = r.step().slot_occurrences(slot);
                (0..r.horizon().total())
                    .flat_map(|step| gates.iter().map(move |&gate| Occurrence { step, gate }))
                    .collect()
            }
            SequenceModel::Born(b) => {
                b.template().slot_occurrences(slot).into_iter().map(|gate| Occurrence { step: 0, gate }).collect()
            }
        }
    }

    /// Distribution of the circuit with one occurrence shifted.
    pub fn shifted_distribution(&self, theta: &[f64], shift: Shift) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        match self {
            SequenceModel::Recurrent(r) => {
                let base = kraus_from_step(r, theta)?.flat();
                let shifted = r.kraus_of(&r.step().with_shift(shift.occurrence.gate, shift.delta)?, theta)?.flat();
                let steps: Vec<&FlatKraus> = (0..r.horizon().total())
                    .map(|t| if t == shift.occurrence.step { &shifted } else { &base })
                    .collect();
                Ok(tree_distribution(&r.initial_memory(), &steps))
            }
            SequenceModel::Born(b) => {
                let t = b.template().with_shift(shift.occurrence.gate, shift.delta)?;
                Ok(t.run(theta)?.probabilities())
            }
        }
    }

    /// Parameter-shift derivative of the whole joint distribution with
    /// respect to every slot: `out[k][x] = Σ_{i,t} c_t·Q_{i,t}(x)`, where
    /// `Q_{i,t}` is the distribution with occurrence `i` of slot `k` shifted
    /// by `s_t` and `(s_t, c_t)` runs over the gate's shift rule.
    pub fn distribution_gradients(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_theta(theta)?;
        let size = 1usize << self.string_bits();
        let mut grads = vec![vec![0.0; size]; self.num_slots()];
        match self {
            SequenceModel::Recurrent(r) => {
                let base = kraus_from_step(r, theta)?.flat();
                let steps = r.horizon().total();
                let levels = tree_levels(&r.initial_memory(), &vec![&base; steps]);
                for (g, gate) in r.step().gates().iter().enumerate() {
                    let Some(k) = gate.slot() else { continue };
                    for &(shift, coeff) in gate.kind.shift_rule() {
                        let shifted = r.kraus_of(&r.step().with_shift(g, shift)?, theta)?.flat();
                        for t in 0..steps {
                            let mut level = shifted.expand(&levels[t]);
                            for _ in t + 1..steps {
                                level = base.expand(&level);
                            }
                            let probs = leaf_probabilities(&level, base.dim);
                            for (d, p) in grads[k].iter_mut().zip(probs) {
                                *d += coeff * p;
                            }
                        }
                    }
                }
            }
            SequenceModel::Born(b) => {
                let template = b.template();
                let mut prefixes = Vec::with_capacity(template.gate_count());
                let mut state = StateVector::zero_state(template.num_qubits())?;
                for gate in template.gates() {
                    prefixes.push(state.clone());
                    state.apply(gate, gate.resolve_angle(theta))?;
                }
                for (g, gate) in template.gates().iter().enumerate() {
                    let Some(k) = gate.slot() else { continue };
                    for &(shift, coeff) in gate.kind.shift_rule() {
                        let mut st = prefixes[g].clone();
                        st.apply(gate, gate.resolve_angle(theta) + shift)?;
                        template.apply_range(&mut st, theta, g + 1..template.gate_count())?;
                        for (d, a) in grads[k].iter_mut().zip(st.amplitudes()) {
                            *d += coeff * a.norm_sqr();
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Sampler for full-horizon strings, optionally from a shifted circuit.
    pub(crate) fn sampler(&self, theta: &[f64], shift: Option<Shift>) -> Result<Sampler> {
        self.check_theta(theta)?;
        match self {
            SequenceModel::Recurrent(r) => {
                let base = kraus_from_step(r, theta)?.flat();
                let shifted = match shift {
                    Some(s) => Some((
                        s.occurrence.step,
                        r.kraus_of(&r.step().with_shift(s.occurrence.gate, s.delta)?, theta)?.flat(),
                    )),
                    None => None,
                };
                Ok(Sampler::Recurrent { init: r.initial_memory(), base, shifted, steps: r.horizon().total() })
            }
            SequenceModel::Born(_) => {
                let dist = match shift {
                    Some(s) => self.shifted_distribution(theta, s)?,
                    None => self.joint_distribution(theta)?,
                };
                Ok(Sampler::table(&dist))
            }
        }
    }
}

/// Draws full-horizon strings (as basis indices) from a fixed circuit.
#[derive(Debug, Clone)]
pub(crate) enum Sampler {
    /// Sequential measurement of the output register at every step.
    Recurrent { init: Vec<Complex64>, base: FlatKraus, shifted: Option<(usize, FlatKraus)>, steps: usize },
    /// Inverse-CDF lookup in the Born-rule distribution of the final state.
    Table { cumulative: Vec<f64> },
}

impl Sampler {
    pub fn table(dist: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = dist
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Sampler::Table { cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Sampler::Table { cumulative } => {
                let total = *cumulative.last().expect("non-empty distribution");
                let u = rng.gen::<f64>() * total;
                cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
            }
            Sampler::Recurrent { init, base, shifted, steps } => {
                let dim = base.dim;
                let mut v = init.clone();
                let mut branch = vec![Complex64::new(0.0, 0.0); dim * base.outcomes];
                let mut index = 0;
                for t in 0..*steps {
                    let k = match shifted {
                        Some((s, k)) if *s == t => k,
                        _ => base,
                    };
                    let mut weights = Vec::with_capacity(k.outcomes);
                    for x in 0..k.outcomes {
                        let out = &mut branch[x * dim..(x + 1) * dim];
                        k.apply(x, &v, out);
                        weights.push(out.iter().map(|a| a.norm_sqr()).sum::<f64>());
                    }
                    let total: f64 = weights.iter().sum();
                    let mut u = rng.gen::<f64>() * total;
                    let mut x = k.outcomes - 1;
                    for (i, w) in weights.iter().enumerate() {
                        if u < *w {
                            x = i;
                            break;
                        }
                        u -= w;
                    }
                    let scale = 1.0 / weights[x].sqrt();
                    for (dst, src) in v.iter_mut().zip(&branch[x * dim..(x + 1) * dim]) {
                        *dst = src * scale;
                    }
                    index = index * k.outcomes + x;
                }
                index
            }
        }
    }
}

/// Kraus operators of the model's step at `theta`.
pub fn kraus_from_step(model: &RecurrentModel, theta: &[f64]) -> Result<KrausModel> {
    model.kraus_of(model.step(), theta)
}

/// Exact distribution over strings of `steps` time steps. Born machines only
/// support their own horizon.
pub fn joint_distribution(model: &SequenceModel, theta: &[f64], steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return invalid("at least one step is required");
    }
    match model {
        SequenceModel::Recurrent(r) => r.joint_distribution_steps(theta, steps),
        SequenceModel::Born(b) if steps == b.horizon().total() => model.joint_distribution(theta),
        SequenceModel::Born(b) => invalid(format!("Born machine is fixed to {} steps", b.horizon().total())),
    }
}

/// Conditional law of the next `future` steps given a past string.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub dist: Vec<f64>,
    pub past_probability: f64,
    /// The past had probability below [`EPS_PAST`]; `dist` is uniform.
    pub degenerate: bool,
}

impl Conditional {
    fn from_joint_slice(slice: &[f64]) -> Self {
        let past_probability: f64 = slice.iter().sum();
        if past_probability < EPS_PAST {
            let n = slice.len();
            return Self { dist: vec![1.0 / n as f64; n], past_probability, degenerate: true };
        }
        Self { dist: slice.iter().map(|p| p / past_probability).collect(), past_probability, degenerate: false }
    }
}

/// `q(future | past) = Q(past·future) / Q(past)`.
pub fn conditional_distribution(
    model: &SequenceModel,
    theta: &[f64],
    past: &str,
    future: usize,
) -> Result<Conditional> {
    if future == 0 {
        return invalid("future length must be at least one step");
    }
    let past_index = bits_to_index(past)?;
    let bits = model.symbol_bits();
    if past.len() % bits != 0 {
        return invalid(format!("past of {} bits is not a whole number of {bits}-bit symbols", past.len()));
    }
    match model {
        SequenceModel::Recurrent(r) => {
            let k = kraus_from_step(r, theta)?.flat();
            let dim = k.dim;
            let mut v = r.initial_memory();
            let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
            let past_steps = past.len() / bits;
            for t in 0..past_steps {
                let x = (past_index >> ((past_steps - 1 - t) * bits)) & ((1 << bits) - 1);
                k.apply(x, &v, &mut scratch);
                std::mem::swap(&mut v, &mut scratch);
            }
            let leaves = tree_distribution(&v, &vec![&k; future]);
            Ok(Conditional::from_joint_slice(&leaves))
        }
        SequenceModel::Born(b) => {
            if past.len() + future != b.horizon().total() {
                return invalid(format!(
                    "Born machine over {} qubits cannot condition {} past on {} future symbols",
                    b.horizon().total(),
                    past.len(),
                    future
                ));
            }
            let joint = model.joint_distribution(theta)?;
            let width = 1usize << future;
            Ok(Conditional::from_joint_slice(&joint[past_index * width..(past_index + 1) * width]))
        }
    }
}

/// The model's conditional table for pasts of `past` steps and futures of
/// `future` steps, every past present and weighted by its model probability.
pub fn conditional_table(model: &SequenceModel, theta: &[f64], past: usize, future: usize) -> Result<ConditionalTable> {
    let joint = joint_distribution(model, theta, past + future)?;
    Ok(table_from_joint(&joint, model.symbol_bits(), past, future))
}

pub(crate) fn table_from_joint(joint: &[f64], bits: usize, past: usize, future: usize) -> ConditionalTable {
    let width = 1usize << (future * bits);
    let rows = joint
        .chunks(width)
        .enumerate()
        .map(|(p, slice)| {
            let c = Conditional::from_joint_slice(slice);
            let row = TableRow { weight: c.past_probability, dist: c.dist, degenerate: c.degenerate };
            (index_to_bits(p, past * bits), row)
        })
        .collect();
    ConditionalTable::from_rows(past, future, rows)
}

/// Draws one string of `length` steps.
pub fn sample_string<R: Rng + ?Sized>(
    model: &SequenceModel,
    theta: &[f64],
    length: usize,
    rng: &mut R,
) -> Result<String> {
    let index = match model {
        SequenceModel::Recurrent(r) => {
            let resized = SequenceModel::Recurrent(r.with_horizon(Horizon { past: 0, future: length.max(1) }));
            if length == 0 {
                return Ok(String::new());
            }
            resized.sampler(theta, None)?.sample(rng)
        }
        SequenceModel::Born(b) => {
            if length != b.horizon().total() {
                return invalid(format!("Born machine samples exactly {} symbols", b.horizon().total()));
            }
            model.sampler(theta, None)?.sample(rng)
        }
    };
    Ok(index_to_bits(index, length * model.symbol_bits()))
}
