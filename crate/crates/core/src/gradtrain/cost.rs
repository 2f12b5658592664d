use std::collections::BTreeMap;

use rand::Rng;

use crate::ansatz::{Sampler, SequenceModel, Shift};
use crate::error::{invalid, Result};
use crate::{bits_to_index, rng};

/// Real weights `λ(x)` over every full-horizon output string.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    bits: usize,
    values: Vec<f64>,
}

impl CostWeights {
    /// Dense weights indexed by basis index, first symbol most significant.
    pub fn from_vec(bits: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != 1usize << bits {
            return invalid(format!("{} weights given for {bits}-bit strings", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("cost weights must be finite");
        }
        Ok(Self { bits, values })
    }

    /// Weights keyed by bit string; strings not listed get weight 0.
    pub fn from_map(bits: usize, map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut values = vec![0.0; 1 << bits];
        for (key, v) in map {
            if key.len() != bits {
                return invalid(format!("key {key:?} is not a {bits}-bit string"));
            }
            values[bits_to_index(key)?] = *v;
        }
        Self::from_vec(bits, values)
    }

    pub fn constant(bits: usize, value: f64) -> Result<Self> {
        Self::from_vec(bits, vec![value; 1 << bits])
    }

    pub fn indicator(string: &str) -> Result<Self> {
        let mut values = vec![0.0; 1 << string.len()];
        values[bits_to_index(string)?] = 1.0;
        Self::from_vec(string.len(), values)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check(&self, model: &SequenceModel) -> Result<()> {
        if self.bits != model.string_bits() {
            return invalid(format!(
                "cost covers {}-bit strings but the model emits {} bits",
                self.bits,
                model.string_bits()
            ));
        }
        Ok(())
    }

    fn dot(&self, dist: &[f64]) -> f64 {
        self.values.iter().zip(dist).map(|(l, q)| l * q).sum()
    }
}

/// `f(θ) = Σ_x λ(x) Q_θ(x)`.
pub fn expected_cost(model: &SequenceModel, theta: &[f64], lambda: &CostWeights) -> Result<f64> {
    lambda.check(model)?;
    Ok(lambda.dot(&model.joint_distribution(theta)?))
}

/// Every shifted circuit contributing to `∂/∂θ_k`, with its coefficient.
fn shift_terms(model: &SequenceModel, slot: usize) -> Vec<(Shift, f64)> {
    let gates = model.template().gates();
    model
        .occurrences(slot)
        .into_iter()
        .flat_map(|occurrence| {
            gates[occurrence.gate]
                .kind
                .shift_rule()
                .iter()
                .map(move |&(delta, coeff)| (Shift { occurrence, delta }, coeff))
        })
        .collect()
}

/// `∂f/∂θ_k` by evaluating every shifted circuit: each occurrence `i` of the
/// slot is moved by the shifts of its gate's rule in turn and
/// `Σ_{i,t} c_t·f_{i,t}` is returned. For plain rotations this is
/// `Σ_{i,s} s·f_{i,s}/2` with `s = ±1` and shifts `s·π/2`.
pub fn exact_shift_gradient(model: &SequenceModel, theta: &[f64], lambda: &CostWeights, slot: usize) -> Result<f64> {
    lambda.check(model)?;
    check_slot(model, slot)?;
    let mut total = 0.0;
    for (shift, coeff) in shift_terms(model, slot) {
        total += coeff * lambda.dot(&model.shifted_distribution(theta, shift)?);
    }
    Ok(total)
}

/// Gradient of `f` for every slot at once, sharing work between slots.
pub fn exact_gradient(model: &SequenceModel, theta: &[f64], lambda: &CostWeights) -> Result<Vec<f64>> {
    lambda.check(model)?;
    Ok(model.distribution_gradients(theta)?.iter().map(|dq| lambda.dot(dq)).collect())
}

fn check_slot(model: &SequenceModel, slot: usize) -> Result<()> {
    if slot >= model.num_slots() {
        return invalid(format!("slot {slot} out of range for {} slots", model.num_slots()));
    }
    Ok(())
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> GradientEstimate {
        let std_error = if self.n == 0 { 0.0 } else { (self.variance() / self.n as f64).sqrt() };
        GradientEstimate { value: self.mean, std_error, samples: self.n }
    }
}

/// Unbiased sampled estimate of `∂f/∂θ_k`.
///
/// Each draw picks an occurrence `i` of the slot uniformly and a term `t` of
/// its shift rule with probability `|c_t|`, samples a string `x` from the
/// circuit with that occurrence shifted by `s_t`, and records
/// `n·sign(c_t)·λ(x)` where `n` is the occurrence count. For plain rotations
/// the term is a uniformly drawn sign `s` with shift `s·π/2`.
pub fn stochastic_shift_gradient<R: Rng + ?Sized>(
    model: &SequenceModel,
    theta: &[f64],
    lambda: &CostWeights,
    slot: usize,
    samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    lambda.check(model)?;
    let draws = ShiftDraws::new(model, theta, slot, samples)?;
    let mut moments = Moments::default();
    for _ in 0..samples {
        match draws.draw(rng) {
            Some((scale, sampler)) => moments.push(scale * lambda.values[sampler.sample(rng)]),
            None => moments.push(0.0),
        }
    }
    Ok(moments.estimate())
}

/// Samplers for every shifted circuit of one slot, drawn by `|c_t|`.
struct ShiftDraws {
    occurrences: usize,
    terms: Vec<(f64, Sampler)>,
    cumulative: Vec<f64>,
}

impl ShiftDraws {
    fn new(model: &SequenceModel, theta: &[f64], slot: usize, samples: usize) -> Result<Self> {
        check_slot(model, slot)?;
        if samples == 0 {
            return invalid("at least one sample is required");
        }
        let occurrences = model.occurrences(slot).len();
        let mut terms = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (shift, coeff) in shift_terms(model, slot) {
            acc += coeff.abs() / occurrences as f64;
            cumulative.push(acc);
            terms.push((coeff, model.sampler(theta, Some(shift))?));
        }
        Ok(Self { occurrences, terms, cumulative })
    }

    /// A term and the factor `n·Σ|c|·sign(c_t)` its indicator is scaled by.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(f64, &Sampler)> {
        let total = *self.cumulative.last()?;
        let u = rng.gen::<f64>() * total;
        let t = self.cumulative.partition_point(|&c| c <= u).min(self.terms.len() - 1);
        let (coeff, sampler) = &self.terms[t];
        Some((self.occurrences as f64 * total * coeff.signum(), sampler))
    }
}

/// Sampled estimate for every slot; slot `k` uses the stream `(seed, k)`.
pub fn stochastic_gradient(
    model: &SequenceModel,
    theta: &[f64],
    lambda: &CostWeights,
    samples: usize,
    seed: u64,
) -> Result<Vec<GradientEstimate>> {
    (0..model.num_slots())
        .map(|k| stochastic_shift_gradient(model, theta, lambda, k, samples, &mut rng::stream(seed, &[k as u64])))
        .collect()
}

/// Central differences `(f(θ+δe_k) − f(θ−δe_k))/(2δ)` for every coordinate.
pub fn finite_difference<F>(mut f: F, theta: &[f64], delta: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(delta > 0.0) {
        return invalid("finite-difference step must be positive");
    }
    let mut point = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            point[k] = theta[k] + delta;
            let up = f(&point)?;
            point[k] = theta[k] - delta;
            let down = f(&point)?;
            point[k] = theta[k];
            Ok((up - down) / (2.0 * delta))
        })
        .collect()
}

/// Two-copy overlap estimate of `B = Σ_x Q(x)²`: the mean of the match
/// indicator `1[x = x']` over independent pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    /// Match frequency `μ̂`.
    pub mean: f64,
    /// Unbiased sample variance of the indicator.
    pub variance: f64,
    /// Standard error of `variance`, from the spread of squared deviations.
    pub variance_std_error: f64,
    pub samples: usize,
}

pub fn two_copy_overlap<R: Rng + ?Sized>(
    model: &SequenceModel,
    theta: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<OverlapEstimate> {
    if samples < 2 {
        return invalid("at least two pairs are required");
    }
    let sampler = model.sampler(theta, None)?;
    let hits: Vec<f64> = (0..samples)
        .map(|_| if sampler.sample(rng) == sampler.sample(rng) { 1.0 } else { 0.0 })
        .collect();
    let mut moments = Moments::default();
    hits.iter().for_each(|&h| moments.push(h));
    let mean = moments.mean();
    let scale = samples as f64 / (samples - 1) as f64;
    let mut spread = Moments::default();
    hits.iter().for_each(|h| spread.push(scale * (h - mean).powi(2)));
    Ok(OverlapEstimate {
        mean,
        variance: moments.variance(),
        variance_std_error: spread.estimate().std_error,
        samples,
    })
}

/// Sampled `∂B/∂θ_k` for `B = Σ_x Q(x)²` with the two-copy trick: one copy
/// from a shifted circuit, one from the unshifted circuit, recording twice
/// the scaled match indicator.
pub fn two_copy_overlap_gradient<R: Rng + ?Sized>(
    model: &SequenceModel,
    theta: &[f64],
    slot: usize,
    samples: usize,
    rng: &mut R,
) -> Result<GradientEstimate> {
    let draws = ShiftDraws::new(model, theta, slot, samples)?;
    let base = model.sampler(theta, None)?;
    let mut moments = Moments::default();
    for _ in 0..samples {
        match draws.draw(rng) {
            Some((scale, sampler)) => {
                let hit = sampler.sample(rng) == base.sample(rng);
                moments.push(if hit { 2.0 * scale } else { 0.0 });
            }
            None => moments.push(0.0),
        }
    }
    Ok(moments.estimate())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_constructors() {
        let mut map = BTreeMap::new();
        map.insert("10".to_string(), 2.5);
        let w = CostWeights::from_map(2, &map).unwrap();
        assert_eq!(w.values(), &[0.0, 0.0, 2.5, 0.0]);
        assert_eq!(CostWeights::indicator("01").unwrap().values(), &[0.0, 1.0, 0.0, 0.0]);
        assert!(CostWeights::from_map(3, &map).is_err());
        assert!(CostWeights::from_vec(1, vec![f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn finite_difference_of_a_quadratic() {
        let g = finite_difference(|t| Ok(t[0] * t[0]), &[1.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!(finite_difference(|t| Ok(t[0]), &[1.0], 0.0).is_err());
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 7.5, 3.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean() - mean).abs() < 1e-14);
        assert!((m.variance() - var).abs() < 1e-12);
        assert!((m.estimate().std_error - (var / 5.0).sqrt()).abs() < 1e-12);
    }
}
