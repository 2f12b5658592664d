//! Divergences between a reference conditional table and a model's.
//!
//! Both metrics are rates in nats per step: the per-past divergence is
//! weighted by the reference row weight and divided by the future length.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stochproc::ConditionalTable;

/// Floor applied to model probabilities inside the KL logarithm.
pub const EPS_Q: f64 = 1e-12;
/// Floor applied to the cosine similarity inside the distortion logarithm.
pub const EPS_S: f64 = 1e-12;

/// Overlap terms of two distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcTerms {
    /// `‖p‖²`
    pub a: f64,
    /// `‖q‖²`
    pub b: f64,
    /// `p·q`
    pub c: f64,
    /// Cosine similarity `C/√(AB)`.
    pub s: f64,
}

fn check_distribution(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return invalid(format!("{name} has negative or non-finite entries"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return invalid(format!("{name} sums to {sum}, not 1"));
    }
    Ok(())
}

pub fn abc(p: &[f64], q: &[f64]) -> Result<AbcTerms> {
    if p.len() != q.len() {
        return invalid(format!("distributions have lengths {} and {}", p.len(), q.len()));
    }
    check_distribution("p", p)?;
    check_distribution("q", q)?;
    let a: f64 = p.iter().map(|x| x * x).sum();
    let b: f64 = q.iter().map(|x| x * x).sum();
    let c: f64 = p.iter().zip(q).map(|(x, y)| x * y).sum();
    if a == 0.0 || b == 0.0 {
        return invalid("zero-norm distribution");
    }
    Ok(AbcTerms { a, b, c, s: c / (a * b).sqrt() })
}

/// Value of a metric together with the number of rows that hit a floor or
/// relied on the uniform fallback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    #[serde(rename = "M")]
    pub past_len: usize,
    #[serde(rename = "L")]
    pub future_len: usize,
    pub value_nats: f64,
    pub degenerate_rows: usize,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_shapes(reference: &ConditionalTable, model: &ConditionalTable) -> Result<()> {
    if reference.past_len() != model.past_len() || reference.future_len() != model.future_len() {
        return invalid(format!(
            "horizons differ: reference (M={}, L={}), model (M={}, L={})",
            reference.past_len(),
            reference.future_len(),
            model.past_len(),
            model.future_len()
        ));
    }
    Ok(())
}

/// Walks the weighted reference rows, pairing each with the model row (or a
/// uniform distribution if the model lacks it). `term` returns the per-row
/// divergence and whether the row was degenerate.
fn weighted_sum(
    reference: &ConditionalTable,
    model: &ConditionalTable,
    mut term: impl FnMut(&[f64], &[f64]) -> (f64, bool),
) -> Result<(f64, usize)> {
    check_shapes(reference, model)?;
    let width = 1usize << reference.future_len();
    let uniform = vec![1.0 / width as f64; width];
    let mut total = 0.0;
    let mut degenerate = 0;
    for (past, row) in reference.rows() {
        if row.weight == 0.0 {
            continue;
        }
        let (q, fallback) = match model.get(past) {
            Some(m) => (m.dist.as_slice(), m.degenerate),
            None => (uniform.as_slice(), true),
        };
        if q.len() != row.dist.len() {
            return invalid(format!("row {past:?} has mismatched widths"));
        }
        let (value, floored) = term(&row.dist, q);
        if fallback || floored {
            degenerate += 1;
        }
        total += row.weight * value;
    }
    Ok((total / reference.future_len() as f64, degenerate))
}

/// Finite-horizon KL-divergence rate of `model` from `reference`.
pub fn kl_rate(reference: &ConditionalTable, model: &ConditionalTable) -> Result<MetricReport> {
    let (value, degenerate) = weighted_sum(reference, model, |p, q| {
        let mut floored = false;
        let d = p
            .iter()
            .zip(q)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, qi)| {
                if *qi < EPS_Q {
                    floored = true;
                }
                pi * (pi / qi.max(EPS_Q)).ln()
            })
            .sum();
        (d, floored)
    })?;
    Ok(report("kl", reference, value, degenerate))
}

/// Co-emission distortion rate: weighted mean of `−log S` per past.
pub fn co_emission(reference: &ConditionalTable, model: &ConditionalTable) -> Result<MetricReport> {
    let mut error = None;
    let (value, degenerate) = weighted_sum(reference, model, |p, q| match abc(p, q) {
        Ok(t) => (-t.s.max(EPS_S).ln(), t.s < EPS_S),
        Err(e) => {
            error.get_or_insert(e);
            (0.0, true)
        }
    })?;
    if let Some(e) = error {
        return Err(e);
    }
    Ok(report("coemission", reference, value, degenerate))
}

fn report(metric: &str, reference: &ConditionalTable, value: f64, degenerate_rows: usize) -> MetricReport {
    MetricReport {
        metric: metric.to_string(),
        past_len: reference.past_len(),
        future_len: reference.future_len(),
        value_nats: value,
        degenerate_rows,
    }
}

/// Weighted total-variation distance `Σ w(past)·½‖p − q‖₁` over the
/// reference rows; a row missing from `other` counts as distance 1.
pub fn weighted_tv(reference: &ConditionalTable, other: &ConditionalTable) -> Result<f64> {
    check_shapes(reference, other)?;
    let mut total = 0.0;
    for (past, row) in reference.rows() {
        let d = match other.get(past) {
            Some(o) => 0.5 * row.dist.iter().zip(&o.dist).map(|(a, b)| (a - b).abs()).sum::<f64>(),
            None => 1.0,
        };
        total += row.weight * d;
    }
    Ok(total)
}
