use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Memory operators `K_x`, one per output symbol `x`.
///
/// A string `x_1 ... x_n` has probability `‖K_{x_n} ... K_{x_1} |ψ>‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausModel {
    memory_qubits: usize,
    output_qubits: usize,
    operators: Vec<DMatrix<Complex64>>,
}

/// Extracts `K_x = (I ⊗ <x|) U (I ⊗ |0>)` from a unitary whose last
/// `output_qubits` qubits form the output register.
pub fn kraus_from_unitary(
    unitary: &DMatrix<Complex64>,
    memory_qubits: usize,
    output_qubits: usize,
) -> Result<KrausModel> {
    let dim = 1usize << memory_qubits;
    let outs = 1usize << output_qubits;
    if unitary.nrows() != dim * outs || unitary.ncols() != dim * outs {
        return invalid(format!(
            "unitary is {}x{}, expected {}x{}",
            unitary.nrows(),
            unitary.ncols(),
            dim * outs,
            dim * outs
        ));
    }
    let operators = (0..outs)
        .map(|x| DMatrix::from_fn(dim, dim, |r, c| unitary[(r * outs + x, c * outs)]))
        .collect();
    Ok(KrausModel { memory_qubits, output_qubits, operators })
}

impl KrausModel {
    pub fn new(memory_qubits: usize, output_qubits: usize, operators: Vec<DMatrix<Complex64>>) -> Result<Self> {
        let dim = 1usize << memory_qubits;
        if operators.len() != 1 << output_qubits {
            return invalid(format!("expected {} operators, got {}", 1 << output_qubits, operators.len()));
        }
        if operators.iter().any(|k| k.nrows() != dim || k.ncols() != dim) {
            return invalid(format!("every operator must be {dim}x{dim}"));
        }
        Ok(Self { memory_qubits, output_qubits, operators })
    }

    pub fn memory_qubits(&self) -> usize {
        self.memory_qubits
    }

    pub fn output_qubits(&self) -> usize {
        self.output_qubits
    }

    pub fn memory_dim(&self) -> usize {
        1 << self.memory_qubits
    }

    pub fn operators(&self) -> &[DMatrix<Complex64>] {
        &self.operators
    }

    /// Frobenius norm of `Σ_x K_x† K_x − I`.
    pub fn completeness_residual(&self) -> f64 {
        let dim = self.memory_dim();
        let sum = self
            .operators
            .iter()
            .fold(DMatrix::<Complex64>::zeros(dim, dim), |acc, k| acc + k.adjoint() * k);
        (sum - DMatrix::identity(dim, dim)).norm()
    }

    /// Distribution over all `steps`-symbol strings from initial memory `init`.
    pub fn process_distribution(&self, init: &DVector<Complex64>, steps: usize) -> Result<Vec<f64>> {
        if init.len() != self.memory_dim() {
            return invalid(format!("initial memory has dimension {}, expected {}", init.len(), self.memory_dim()));
        }
        let flat = FlatKraus::from_model(self);
        let steps: Vec<&FlatKraus> = vec![&flat; steps];
        Ok(tree_distribution(init.as_slice(), &steps))
    }

    pub(crate) fn flat(&self) -> FlatKraus {
        FlatKraus::from_model(self)
    }
}

/// Row-major copy of a Kraus set for the inner loops.
#[derive(Debug, Clone)]
pub(crate) struct FlatKraus {
    pub dim: usize,
    pub outcomes: usize,
    data: Vec<Complex64>,
}

impl FlatKraus {
    fn from_model(model: &KrausModel) -> Self {
        let dim = model.memory_dim();
        let mut data = Vec::with_capacity(model.operators.len() * dim * dim);
        for k in &model.operators {
            for r in 0..dim {
                for c in 0..dim {
                    data.push(k[(r, c)]);
                }
            }
        }
        Self { dim, outcomes: model.operators.len(), data }
    }

    /// `out = K_x v`.
    #[inline]
    pub fn apply(&self, x: usize, v: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let k = &self.data[x * d * d..(x + 1) * d * d];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &k[r * d..(r + 1) * d];
            *o = row.iter().zip(v).fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b);
        }
    }

    /// Expands every memory vector of `level` by one step.
    pub fn expand(&self, level: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        let count = level.len() / d;
        let mut next = vec![Complex64::new(0.0, 0.0); count * self.outcomes * d];
        for p in 0..count {
            let v = &level[p * d..(p + 1) * d];
            for x in 0..self.outcomes {
                let child = p * self.outcomes + x;
                self.apply(x, v, &mut next[child * d..(child + 1) * d]);
            }
        }
        next
    }
}

/// Unnormalized memory vectors for every prefix, level by level: `levels[t]`
/// holds the vectors after `t` steps, ordered by prefix index.
pub(crate) fn tree_levels(init: &[Complex64], steps: &[&FlatKraus]) -> Vec<Vec<Complex64>> {
    let mut levels = Vec::with_capacity(steps.len() + 1);
    levels.push(init.to_vec());
    for k in steps {
        let next = k.expand(levels.last().expect("non-empty"));
        levels.push(next);
    }
    levels
}

pub(crate) fn leaf_probabilities(level: &[Complex64], dim: usize) -> Vec<f64> {
    level.chunks(dim).map(|v| v.iter().map(|a| a.norm_sqr()).sum()).collect()
}

/// Joint distribution of the strings generated by `steps` from `init`.
pub(crate) fn tree_distribution(init: &[Complex64], steps: &[&FlatKraus]) -> Vec<f64> {
    let mut level = init.to_vec();
    for k in steps {
        level = k.expand(&level);
    }
    leaf_probabilities(&level, init.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_unitary_gives_trivial_kraus() {
        let k = kraus_from_unitary(&DMatrix::identity(4, 4), 1, 1).unwrap();
        assert_eq!(k.operators()[0], DMatrix::identity(2, 2));
        assert_eq!(k.operators()[1], DMatrix::zeros(2, 2));
        assert!(k.completeness_residual() < 1e-15);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        assert!(kraus_from_unitary(&DMatrix::identity(8, 8), 1, 1).is_err());
        assert!(KrausModel::new(1, 1, vec![DMatrix::identity(2, 2)]).is_err());
    }

    #[test]
    fn process_distribution_sums_to_one() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let k0 = DMatrix::from_diagonal_element(2, 2, Complex64::new(c, 0.0));
        let k1 = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.0, c));
        let model = KrausModel::new(1, 1, vec![k0, k1]).unwrap();
        let init = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        let dist = model.process_distribution(&init, 4).unwrap();
        assert_eq!(dist.len(), 16);
        for p in dist {
            assert!((p - 1.0 / 16.0).abs() < 1e-15);
        }
    }
}
