//! Dense pure-state simulator.
//!
//! Qubit 0 is the most significant bit of a basis index, so the amplitude of
//! `|q0 q1 ... q_{n-1}>` lives at index `q0*2^(n-1) + ... + q_{n-1}`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Upper bound on dense register size.
pub const MAX_QUBITS: usize = 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Pure state over `num_qubits` qubits.
///
/// Branch states produced by [`measure_branch`] may have zero qubits (a scalar)
/// or be the all-zero placeholder of an impossible outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero_state(num_qubits: usize) -> Result<Self> {
        if num_qubits > MAX_QUBITS {
            return invalid(format!("{num_qubits} qubits exceeds the dense limit of {MAX_QUBITS}"));
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = ONE;
        Ok(Self { num_qubits, amplitudes })
    }

    /// Computational basis state `|index>`.
    pub fn basis_state(num_qubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::zero_state(num_qubits)?;
        if index >= state.amplitudes.len() {
            return invalid(format!("basis index {index} out of range for {num_qubits} qubits"));
        }
        state.amplitudes[0] = ZERO;
        state.amplitudes[index] = ONE;
        Ok(state)
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return invalid(format!("amplitude vector length {len} is not a power of two"));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return invalid(format!("{num_qubits} qubits exceeds the dense limit of {MAX_QUBITS}"));
        }
        Ok(Self { num_qubits, amplitudes })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Born-rule probabilities of every basis index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return invalid(format!("qubit {qubit} out of range for a {}-qubit state", self.num_qubits));
        }
        Ok(())
    }

    fn bit(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    /// Applies `gate` at rotation `angle` in place.
    pub fn apply(&mut self, gate: &Gate, angle: f64) -> Result<()> {
        self.check_qubit(gate.target)?;
        if let Some(control) = gate.control {
            self.check_qubit(control)?;
            if control == gate.target {
                return invalid(format!("control and target are both qubit {control}"));
            }
        }
        let matrix = gate.kind.matrix(angle);
        let control_mask = gate.control.map_or(0, |c| self.bit(c));
        self.apply_matrix(gate.target, control_mask, &matrix);
        Ok(())
    }

    /// Applies a 2x2 matrix to `target` on the subspace where every bit of
    /// `control_mask` is set.
    fn apply_matrix(&mut self, target: usize, control_mask: usize, m: &[[Complex64; 2]; 2]) {
        let stride = self.bit(target);
        let len = self.amplitudes.len();
        let diagonal = m[0][1] == ZERO && m[1][0] == ZERO;
        let mut block = 0;
        while block < len {
            for i in block..block + stride {
                if i & control_mask != control_mask {
                    continue;
                }
                let j = i | stride;
                let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
                if diagonal {
                    self.amplitudes[i] = m[0][0] * a;
                    self.amplitudes[j] = m[1][1] * b;
                } else {
                    self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                    self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
                }
            }
            block += 2 * stride;
        }
    }
}

/// Gate families supported by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    RotX,
    RotY,
    RotZ,
    CRotX,
    CRotY,
    CRotZ,
    PauliX,
}

impl GateKind {
    /// Whether the gate carries a rotation angle.
    pub fn is_rotation(self) -> bool {
        !matches!(self, GateKind::PauliX)
    }

    pub fn is_controlled(self) -> bool {
        matches!(self, GateKind::CRotX | GateKind::CRotY | GateKind::CRotZ)
    }

    /// Exact shift rule `∂f/∂θ = Σ_t c_t·f(θ + s_t)` as `(s_t, c_t)` pairs.
    ///
    /// Plain rotations have generator eigenvalues `±1/2` and use the two-term
    /// `±π/2` rule. Controlled rotations have spectrum `{0, 0, ±1/2}`, so
    /// `f` carries frequencies `1/2` and `1` and needs four terms. In both
    /// rules `Σ_t |c_t| = 1`.
    pub fn shift_rule(self) -> &'static [(f64, f64)] {
        const PLAIN: [(f64, f64); 2] = [(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)];
        // (√2 ± 1)/(4√2)
        const D_PLUS: f64 = 0.426_776_695_296_636_8;
        const D_MINUS: f64 = 0.073_223_304_703_363_13;
        const CONTROLLED: [(f64, f64); 4] = [
            (FRAC_PI_2, D_PLUS),
            (-FRAC_PI_2, -D_PLUS),
            (3.0 * FRAC_PI_2, -D_MINUS),
            (-3.0 * FRAC_PI_2, D_MINUS),
        ];
        match self {
            GateKind::RotX | GateKind::RotY | GateKind::RotZ => &PLAIN,
            GateKind::CRotX | GateKind::CRotY | GateKind::CRotZ => &CONTROLLED,
            GateKind::PauliX => &[],
        }
    }

    /// Target-qubit matrix `exp(-i angle sigma / 2)`; `PauliX` ignores `angle`.
    pub fn matrix(self, angle: f64) -> [[Complex64; 2]; 2] {
        let (s, c) = (angle / 2.0).sin_cos();
        match self {
            GateKind::RotX | GateKind::CRotX => {
                let off = Complex64::new(0.0, -s);
                [[Complex64::new(c, 0.0), off], [off, Complex64::new(c, 0.0)]]
            }
            GateKind::RotY | GateKind::CRotY => [
                [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
            ],
            GateKind::RotZ | GateKind::CRotZ => [
                [Complex64::new(c, -s), ZERO],
                [ZERO, Complex64::new(c, s)],
            ],
            GateKind::PauliX => [[ZERO, ONE], [ONE, ZERO]],
        }
    }
}

/// Where a gate takes its rotation angle from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleSource {
    /// A fixed angle in radians.
    Fixed(f64),
    /// Index into the parameter vector.
    Slot(usize),
}

/// One gate of a circuit program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<usize>,
    pub angle: AngleSource,
    /// Constant added to the resolved angle; parameter-shift circuits set it to ±π/2.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Gate {
    pub fn new(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        Self { kind, target, control: None, angle, offset: 0.0 }
    }

    pub fn controlled(kind: GateKind, control: usize, target: usize, angle: AngleSource) -> Self {
        Self { kind, target, control: Some(control), angle, offset: 0.0 }
    }

    /// Parameterized single-qubit rotation bound to `slot`.
    pub fn rot(kind: GateKind, target: usize, slot: usize) -> Self {
        Self::new(kind, target, AngleSource::Slot(slot))
    }

    /// Parameterized controlled rotation bound to `slot`.
    pub fn crot(kind: GateKind, control: usize, target: usize, slot: usize) -> Self {
        Self::controlled(kind, control, target, AngleSource::Slot(slot))
    }

    pub fn slot(&self) -> Option<usize> {
        match self.angle {
            AngleSource::Slot(k) => Some(k),
            AngleSource::Fixed(_) => None,
        }
    }

    /// Resolves the rotation angle against a parameter vector.
    pub fn resolve_angle(&self, theta: &[f64]) -> f64 {
        let base = match self.angle {
            AngleSource::Fixed(a) => a,
            AngleSource::Slot(k) => theta[k],
        };
        base + self.offset
    }
}

/// Returns `gate` applied to `state` at the given angle.
pub fn apply_gate(state: &StateVector, gate: &Gate, angle: f64) -> Result<StateVector> {
    let mut out = state.clone();
    out.apply(gate, angle)?;
    Ok(out)
}

/// Returns `state ⊗ |0>`, the new qubit taking the last (least significant) position.
pub fn append_fresh_qubit(state: &StateVector) -> Result<StateVector> {
    if state.num_qubits + 1 > MAX_QUBITS {
        return invalid(format!("cannot grow a {}-qubit state past the dense limit", state.num_qubits));
    }
    let mut amplitudes = Vec::with_capacity(2 * state.amplitudes.len());
    for &a in &state.amplitudes {
        amplitudes.push(a);
        amplitudes.push(ZERO);
    }
    Ok(StateVector { num_qubits: state.num_qubits + 1, amplitudes })
}

/// One outcome of a computational-basis measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// Normalized post-measurement state with the measured qubit removed, or
    /// all zeros when `probability` is 0.
    pub state: StateVector,
    pub probability: f64,
}

/// Measures `qubit` and returns both outcome branches `[outcome 0, outcome 1]`.
pub fn measure_branch(state: &StateVector, qubit: usize) -> Result<[Branch; 2]> {
    state.check_qubit(qubit)?;
    let n = state.num_qubits;
    let shift = n - 1 - qubit;
    let low_mask = (1usize << shift) - 1;
    let half = state.amplitudes.len() / 2;
    let mut parts = [vec![ZERO; half], vec![ZERO; half]];
    for (i, &a) in state.amplitudes.iter().enumerate() {
        let outcome = (i >> shift) & 1;
        let reduced = ((i >> (shift + 1)) << shift) | (i & low_mask);
        parts[outcome][reduced] = a;
    }
    let total = state.norm_sqr();
    let branches = parts.map(|amps| {
        let weight: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if weight == 0.0 || total == 0.0 {
            return Branch {
                state: StateVector { num_qubits: n - 1, amplitudes: vec![ZERO; half] },
                probability: 0.0,
            };
        }
        let scale = 1.0 / weight.sqrt();
        Branch {
            state: StateVector { num_qubits: n - 1, amplitudes: amps.into_iter().map(|a| a * scale).collect() },
            probability: weight / total,
        }
    });
    Ok(branches)
}
