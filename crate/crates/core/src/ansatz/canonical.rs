//! Cosine-sine canonical form of a step unitary with one output qubit.
//!
//! Writing the unitary in blocks `A_ij = (I ⊗ <i|) U (I ⊗ |j>)`, the first
//! block column is `A_00 = Ũ0 C W0†`, `A_10 = Ũ1 S W0†` with `C² + S² = I`.
//! Conjugating by `W0` gives Kraus operators `K_0 = U0 C`, `K_1 = U1 S` that
//! generate the same process from the transformed initial memory `W0† |ψ>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use super::kraus::{kraus_from_unitary, KrausModel};
use crate::error::{invalid, QseqError, Result};

/// Largest tolerated `‖U†U − I‖_F` on input.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Canonical Kraus pair together with the memory transform that produces it.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub u0: DMatrix<Complex64>,
    pub u1: DMatrix<Complex64>,
    /// Cosines, descending.
    pub c: Vec<f64>,
    pub s: Vec<f64>,
    pub w0: DMatrix<Complex64>,
}

impl CanonicalForm {
    /// `Ũ0 = W0 U0`.
    pub fn u0_tilde(&self) -> DMatrix<Complex64> {
        &self.w0 * &self.u0
    }

    /// `Ũ1 = W0 U1`.
    pub fn u1_tilde(&self) -> DMatrix<Complex64> {
        &self.w0 * &self.u1
    }

    pub fn c_matrix(&self) -> DMatrix<Complex64> {
        diag(&self.c)
    }

    pub fn s_matrix(&self) -> DMatrix<Complex64> {
        diag(&self.s)
    }

    /// `K_0 = U0 C`, `K_1 = U1 S`.
    pub fn kraus(&self) -> KrausModel {
        let memory_qubits = self.c.len().trailing_zeros() as usize;
        KrausModel::new(memory_qubits, 1, vec![&self.u0 * self.c_matrix(), &self.u1 * self.s_matrix()])
            .expect("square operators of matching size")
    }

    /// Initial memory for the canonical pair equivalent to `psi` for the original unitary.
    pub fn transform_initial(&self, psi: &DVector<Complex64>) -> DVector<Complex64> {
        self.w0.adjoint() * psi
    }
}

fn diag(values: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0))))
}

/// Computes the canonical form of a `2d × 2d` unitary whose last qubit is the output.
///
/// Cosines are sorted in descending order and the phases of `W0` are chosen so
/// that the off-diagonal entries of the first row of `U0` are real and
/// non-negative. The phase of `U0[(0,0)]` is a similarity invariant and is
/// left as found.
pub fn cs_canonical_form(unitary: &DMatrix<Complex64>) -> Result<CanonicalForm> {
    let n = unitary.nrows();
    if n != unitary.ncols() || n < 2 || !n.is_power_of_two() {
        return invalid(format!("expected a square unitary of power-of-two size, got {}x{}", n, unitary.ncols()));
    }
    let residual = (unitary.adjoint() * unitary - DMatrix::identity(n, n)).norm();
    if residual > UNITARITY_TOL {
        return invalid(format!("input is not unitary (‖U†U − I‖ = {residual:.3e})"));
    }
    let dim = n / 2;
    let block = |i: usize| DMatrix::from_fn(dim, dim, |r, c| unitary[(2 * r + i, 2 * c)]);
    let (a00, a10) = (block(0), block(1));

    let svd = a00.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(QseqError::Numerical("SVD did not return singular vectors".into())),
    };
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let c: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].min(1.0)).collect();
    let u0_tilde = DMatrix::from_fn(dim, dim, |r, k| u[(r, order[k])]);
    let v = v_t.adjoint();
    let mut w0 = DMatrix::from_fn(dim, dim, |r, k| v[(r, order[k])]);

    let b = &a10 * &w0;
    let s: Vec<f64> = (0..dim).map(|k| b.column(k).norm()).collect();
    let mut u1_tilde = orthonormal_columns(&b, &s);

    // gauge: first row of U0 = W0† Ũ0 real off the diagonal
    let u0 = w0.adjoint() * &u0_tilde;
    let phases: Vec<Complex64> = (0..dim)
        .map(|j| {
            let z = u0[(0, j)];
            if j == 0 || z.norm() < 1e-12 {
                Complex64::new(1.0, 0.0)
            } else {
                z.conj() / z.norm()
            }
        })
        .collect();
    let mut u0_tilde = u0_tilde;
    for (j, ph) in phases.iter().enumerate() {
        for r in 0..dim {
            w0[(r, j)] *= ph;
            u0_tilde[(r, j)] *= ph;
            u1_tilde[(r, j)] *= ph;
        }
    }
    let u0 = w0.adjoint() * &u0_tilde;
    let u1 = w0.adjoint() * &u1_tilde;
    Ok(CanonicalForm { u0, u1, c, s, w0 })
}

/// Unitary whose column `k` is `b_k / s_k`, completed by Gram-Schmidt where
/// `s_k` vanishes. Columns are processed by decreasing norm so that small
/// columns only contribute their component orthogonal to the reliable ones.
fn orthonormal_columns(b: &DMatrix<Complex64>, norms: &[f64]) -> DMatrix<Complex64> {
    let dim = b.nrows();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut out = DMatrix::<Complex64>::zeros(dim, dim);
    let mut accepted: Vec<usize> = Vec::new();
    let mut spare = 0;
    for &k in &order {
        let mut v = b.column(k).clone_owned();
        let mut ok = orthogonalize(&mut v, &out, &accepted) > 1e-13;
        while !ok {
            v = DVector::zeros(dim);
            v[spare] = Complex64::new(1.0, 0.0);
            spare += 1;
            ok = orthogonalize(&mut v, &out, &accepted) > 1e-6;
        }
        out.set_column(k, &v);
        accepted.push(k);
    }
    out
}

/// Two rounds of projection against the accepted columns, then normalization.
/// Returns the norm before normalization.
fn orthogonalize(v: &mut DVector<Complex64>, basis: &DMatrix<Complex64>, cols: &[usize]) -> f64 {
    for _ in 0..2 {
        for &j in cols {
            let q = basis.column(j);
            let proj = q.dotc(v);
            *v -= q * proj;
        }
    }
    let norm = v.norm();
    if norm > 0.0 {
        *v /= Complex64::new(norm, 0.0);
    }
    norm
}

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<Complex64> {
    let mut gaussian = || {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let g = DMatrix::from_fn(dim, dim, |_, _| Complex64::new(gaussian(), gaussian()));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Kraus pair read directly off the unitary, for comparison with the canonical pair.
pub fn direct_kraus(unitary: &DMatrix<Complex64>) -> Result<KrausModel> {
    let dim = unitary.nrows() / 2;
    kraus_from_unitary(unitary, dim.trailing_zeros() as usize, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn basis(dim: usize, i: usize) -> DVector<Complex64> {
        let mut v = DVector::zeros(dim);
        v[i] = Complex64::new(1.0, 0.0);
        v
    }

    fn check_form(u: &DMatrix<Complex64>, form: &CanonicalForm) {
        let dim = form.c.len();
        let eye = DMatrix::<Complex64>::identity(dim, dim);
        assert!((form.u0.adjoint() * &form.u0 - &eye).norm() < 1e-10);
        assert!((form.u1.adjoint() * &form.u1 - &eye).norm() < 1e-10);
        assert!((form.w0.adjoint() * &form.w0 - &eye).norm() < 1e-10);
        for k in 0..dim {
            assert!((form.c[k].powi(2) + form.s[k].powi(2) - 1.0).abs() < 1e-10);
            if k > 0 {
                assert!(form.c[k - 1] >= form.c[k]);
            }
        }
        let a00 = DMatrix::from_fn(dim, dim, |r, c| u[(2 * r, 2 * c)]);
        let a10 = DMatrix::from_fn(dim, dim, |r, c| u[(2 * r + 1, 2 * c)]);
        let w_dag = form.w0.adjoint();
        assert!((form.u0_tilde() * form.c_matrix() * &w_dag - a00).norm() < 1e-10);
        assert!((form.u1_tilde() * form.s_matrix() * &w_dag - a10).norm() < 1e-10);
        assert!(form.kraus().completeness_residual() < 1e-10);
        for j in 1..dim {
            assert!(form.u0[(0, j)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn identity_form() {
        let u = DMatrix::<Complex64>::identity(4, 4);
        let form = cs_canonical_form(&u).unwrap();
        check_form(&u, &form);
        assert_eq!(form.c, vec![1.0, 1.0]);
        assert!(form.s.iter().all(|s| *s == 0.0));
        assert!((&form.u0 - DMatrix::<Complex64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn cnot_form() {
        // memory (qubit 0) controls the output (qubit 1)
        let mut u = DMatrix::<Complex64>::zeros(4, 4);
        for (from, to) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            u[(to, from)] = Complex64::new(1.0, 0.0);
        }
        let form = cs_canonical_form(&u).unwrap();
        check_form(&u, &form);
        assert!((form.c[0] - 1.0).abs() < 1e-12 && form.c[1].abs() < 1e-12);
        assert!(form.s[0].abs() < 1e-12 && (form.s[1] - 1.0).abs() < 1e-12);
        // K_0 and K_1 project onto the two memory states up to phases
        let k = form.kraus();
        assert!((k.operators()[0][(0, 0)].norm() - 1.0).abs() < 1e-12);
        assert!((k.operators()[1][(1, 1)].norm() - 1.0).abs() < 1e-12);
        assert!(k.operators()[0][(1, 1)].norm() < 1e-12);
        assert!(k.operators()[1][(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn random_forms_reproduce_process() {
        let mut rng = rng::seeded(11);
        for _ in 0..20 {
            let u = haar_unitary(4, &mut rng);
            let form = cs_canonical_form(&u).unwrap();
            check_form(&u, &form);
            let original = direct_kraus(&u).unwrap();
            let canonical = form.kraus();
            for start in 0..2 {
                let psi = basis(2, start);
                for len in 1..=6 {
                    let p = original.process_distribution(&psi, len).unwrap();
                    let q = canonical.process_distribution(&form.transform_initial(&psi), len).unwrap();
                    let err = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    assert!(err < 1e-8, "len {len}: {err}");
                }
            }
        }
    }

    #[test]
    fn larger_memory_is_supported() {
        let mut rng = rng::seeded(5);
        let u = haar_unitary(8, &mut rng);
        let form = cs_canonical_form(&u).unwrap();
        check_form(&u, &form);
    }

    #[test]
    fn rejects_non_unitary() {
        let mut u = DMatrix::<Complex64>::identity(4, 4);
        u[(0, 0)] = Complex64::new(1.1, 0.0);
        assert!(cs_canonical_form(&u).is_err());
        assert!(cs_canonical_form(&DMatrix::<Complex64>::identity(3, 3)).is_err());
    }
}
