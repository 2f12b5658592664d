use crate::ansatz::{table_from_joint, SequenceModel, EPS_PAST};
use crate::bits_to_index;
use crate::error::{invalid, Result};
use crate::metrics::{self, EPS_S};
use crate::stochproc::ConditionalTable;

use super::cost::{stochastic_gradient, CostWeights};

/// Co-emission distortion of a model against a reference, with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionGradient {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Reference rows whose model past was improbable or whose similarity
    /// hit the floor; they contribute nothing to the gradient.
    pub degenerate_rows: usize,
}

/// The model's conditional table on the reference's horizon.
pub fn model_table(model: &SequenceModel, theta: &[f64], past_len: usize, future_len: usize) -> Result<ConditionalTable> {
    check_horizon(model, past_len, future_len)?;
    let joint = model.joint_distribution(theta)?;
    Ok(table_from_joint(&joint, model.symbol_bits(), past_len, future_len))
}

fn check_horizon(model: &SequenceModel, past_len: usize, future_len: usize) -> Result<()> {
    let h = model.horizon();
    if h.past != past_len || h.future != future_len {
        return invalid(format!(
            "model horizon (M={}, L={}) does not match the table (M={past_len}, L={future_len})",
            h.past, h.future
        ));
    }
    if model.symbol_bits() != 1 {
        return invalid("distortion training needs one output bit per step");
    }
    Ok(())
}

/// Pulls the gradient of `D_A` back onto the joint distribution.
///
/// With `q_f = Q(pf)/Q(p)`, the quotient rule gives
/// `∂C = Σ_f (p_f − C)·∂Q(pf)/Q(p)` and `∂B = 2Σ_f (q_f − B)·∂Q(pf)/Q(p)`,
/// so `∂D_A = Σ_x Λ(x)·∂Q(x)` with
/// `Λ(pf) = −(w/L)·[(p_f − C)/C − (q_f − B)/B]/Q(p)`, everything frozen at
/// the current parameters. Returns `(D_A, Λ, degenerate rows)`.
pub fn distortion_weights(
    model: &SequenceModel,
    theta: &[f64],
    reference: &ConditionalTable,
) -> Result<(f64, CostWeights, usize)> {
    let (past_len, future_len) = (reference.past_len(), reference.future_len());
    check_horizon(model, past_len, future_len)?;
    let joint = model.joint_distribution(theta)?;
    let table = table_from_joint(&joint, 1, past_len, future_len);
    let value = metrics::co_emission(reference, &table)?.value_nats;

    let width = 1usize << future_len;
    let mut lambda = vec![0.0; joint.len()];
    let mut degenerate = 0;
    for (past, row) in reference.rows() {
        if row.weight == 0.0 {
            continue;
        }
        let p_index = bits_to_index(past)?;
        let slice = &joint[p_index * width..(p_index + 1) * width];
        let qp: f64 = slice.iter().sum();
        if qp < EPS_PAST {
            degenerate += 1;
            continue;
        }
        let q: Vec<f64> = slice.iter().map(|x| x / qp).collect();
        let t = metrics::abc(&row.dist, &q)?;
        if t.s < EPS_S {
            degenerate += 1;
            continue;
        }
        let scale = -row.weight / (future_len as f64 * qp);
        for f in 0..width {
            lambda[p_index * width + f] = scale * ((row.dist[f] - t.c) / t.c - (q[f] - t.b) / t.b);
        }
    }
    Ok((value, CostWeights::from_vec(past_len + future_len, lambda)?, degenerate))
}

/// `D_A` and its exact gradient.
pub fn distortion_gradient(model: &SequenceModel, theta: &[f64], reference: &ConditionalTable) -> Result<DistortionGradient> {
    let (value, lambda, degenerate_rows) = distortion_weights(model, theta, reference)?;
    let gradient = super::cost::exact_gradient(model, theta, &lambda)?;
    Ok(DistortionGradient { value, gradient, degenerate_rows })
}

/// `D_A` and a sampled gradient, `samples` draws per slot.
pub fn distortion_gradient_stochastic(
    model: &SequenceModel,
    theta: &[f64],
    reference: &ConditionalTable,
    samples: usize,
    seed: u64,
) -> Result<DistortionGradient> {
    let (value, lambda, degenerate_rows) = distortion_weights(model, theta, reference)?;
    let gradient = stochastic_gradient(model, theta, &lambda, samples, seed)?.iter().map(|e| e.value).collect();
    Ok(DistortionGradient { value, gradient, degenerate_rows })
}

/// `D_A(θ)` alone.
pub fn distortion(model: &SequenceModel, theta: &[f64], reference: &ConditionalTable) -> Result<f64> {
    let table = model_table(model, theta, reference.past_len(), reference.future_len())?;
    Ok(metrics::co_emission(reference, &table)?.value_nats)
}
