//! Parameterized circuit templates, recurrent sequence models and their exact
//! output distributions.
//!
//! A [`CircuitTemplate`] is a gate program whose rotation angles are read from
//! a parameter vector through slot indices. A [`RecurrentModel`] applies one
//! step template to a memory register and a fresh output register at every
//! time step; a [`BornMachine`] is a single template measured once.

mod canonical;
mod io;
mod kraus;
mod model;

pub use canonical::{cs_canonical_form, direct_kraus, haar_unitary, CanonicalForm};
pub use io::ModelDocument;
pub use kraus::{kraus_from_unitary, KrausModel};
pub use model::{
    conditional_distribution, conditional_table, joint_distribution, kraus_from_step, sample_string,
    BornMachine, Conditional, Horizon, ModelKind, Occurrence, RecurrentModel, SequenceModel, Shift,
    EPS_PAST,
};
pub(crate) use model::{table_from_joint, Sampler};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::qsim::{Gate, GateKind, StateVector};

/// Gate program over a fixed register with `num_slots` free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTemplate {
    num_qubits: usize,
    gates: Vec<Gate>,
    num_slots: usize,
}

impl CircuitTemplate {
    pub fn new(num_qubits: usize, gates: Vec<Gate>, num_slots: usize) -> Result<Self> {
        if num_qubits == 0 {
            return invalid("a circuit template needs at least one qubit");
        }
        for (i, gate) in gates.iter().enumerate() {
            if gate.target >= num_qubits {
                return invalid(format!("gate {i}: target {} out of range", gate.target));
            }
            match gate.control {
                Some(c) if c >= num_qubits => return invalid(format!("gate {i}: control {c} out of range")),
                Some(c) if c == gate.target => return invalid(format!("gate {i}: control equals target")),
                None if gate.kind.is_controlled() => {
                    return invalid(format!("gate {i}: {:?} requires a control qubit", gate.kind))
                }
                Some(_) if !gate.kind.is_controlled() && gate.kind != GateKind::PauliX => {
                    return invalid(format!("gate {i}: {:?} does not take a control qubit", gate.kind))
                }
                _ => {}
            }
            if let Some(k) = gate.slot() {
                if !gate.kind.is_rotation() {
                    return invalid(format!("gate {i}: {:?} cannot be parameterized", gate.kind));
                }
                if k >= num_slots {
                    return invalid(format!("gate {i}: slot {k} exceeds {num_slots} slots"));
                }
            }
        }
        Ok(Self { num_qubits, gates, num_slots })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    /// Indices of the gates reading parameter `slot`.
    pub fn slot_occurrences(&self, slot: usize) -> Vec<usize> {
        self.gates
            .iter()
            .enumerate()
            .filter(|(_, g)| g.slot() == Some(slot))
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy of the template with `delta` added to the angle of gate `gate`.
    pub fn with_shift(&self, gate: usize, delta: f64) -> Result<Self> {
        if gate >= self.gates.len() {
            return invalid(format!("gate index {gate} out of range"));
        }
        let mut out = self.clone();
        out.gates[gate].offset += delta;
        Ok(out)
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_slots {
            return invalid(format!("expected {} parameters, got {}", self.num_slots, theta.len()));
        }
        if let Some(bad) = theta.iter().find(|t| !t.is_finite()) {
            return invalid(format!("non-finite parameter {bad}"));
        }
        Ok(())
    }

    /// Applies gates `range` to `state`.
    pub(crate) fn apply_range(
        &self,
        state: &mut StateVector,
        theta: &[f64],
        range: std::ops::Range<usize>,
    ) -> Result<()> {
        for gate in &self.gates[range] {
            state.apply(gate, gate.resolve_angle(theta))?;
        }
        Ok(())
    }

    /// Applies the whole template to `state`.
    pub fn apply(&self, state: &mut StateVector, theta: &[f64]) -> Result<()> {
        self.check_theta(theta)?;
        if state.num_qubits() != self.num_qubits {
            return invalid(format!(
                "template acts on {} qubits, state has {}",
                self.num_qubits,
                state.num_qubits()
            ));
        }
        self.apply_range(state, theta, 0..self.gates.len())
    }

    /// Output state from `|0...0>`.
    pub fn run(&self, theta: &[f64]) -> Result<StateVector> {
        let mut state = StateVector::zero_state(self.num_qubits)?;
        self.apply(&mut state, theta)?;
        Ok(state)
    }

    /// Dense unitary of the template, column `j` being the image of `|j>`.
    pub fn unitary(&self, theta: &[f64]) -> Result<DMatrix<Complex64>> {
        self.check_theta(theta)?;
        let dim = 1usize << self.num_qubits;
        let mut u = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut col = StateVector::basis_state(self.num_qubits, j)?;
            self.apply_range(&mut col, theta, 0..self.gates.len())?;
            for (i, a) in col.amplitudes().iter().enumerate() {
                u[(i, j)] = *a;
            }
        }
        Ok(u)
    }

    /// Gates relabelled through `map` (old qubit -> new qubit).
    pub(crate) fn remapped_gates(&self, map: &[usize]) -> Vec<Gate> {
        self.gates
            .iter()
            .map(|g| Gate { target: map[g.target], control: g.control.map(|c| map[c]), ..g.clone() })
            .collect()
    }
}

/// Layered hardware-efficient template: each layer applies RotZ, RotY, RotZ to
/// every qubit, then a CRotX on every neighbour pair (control `q+1`, target `q`),
/// even pairs first and odd pairs second.
pub fn hardware_efficient(num_qubits: usize, layers: usize) -> Result<CircuitTemplate> {
    if num_qubits < 2 {
        return invalid("hardware-efficient templates need at least two qubits");
    }
    if layers == 0 {
        return invalid("at least one layer is required");
    }
    let mut gates = Vec::new();
    let mut slot = 0;
    let mut next = || {
        slot += 1;
        slot - 1
    };
    for _ in 0..layers {
        for q in 0..num_qubits {
            gates.push(Gate::rot(GateKind::RotZ, q, next()));
            gates.push(Gate::rot(GateKind::RotY, q, next()));
            gates.push(Gate::rot(GateKind::RotZ, q, next()));
        }
        for parity in [0, 1] {
            for q in (parity..num_qubits - 1).step_by(2) {
                gates.push(Gate::crot(GateKind::CRotX, q + 1, q, next()));
            }
        }
    }
    let num_slots = gates.len();
    CircuitTemplate::new(num_qubits, gates, num_slots)
}

/// The 8-parameter step for one memory qubit (qubit 0) and one output qubit (qubit 1).
///
/// Gate order:
/// 1. CRotY memory -> output and RotY on the output set the memory-dependent
///    output amplitudes `cos(a/2)`, `cos((a+b)/2)`; a RotY on the memory sits in
///    the same block.
/// 2. CRotY and CRotZ controlled by the output act on the memory, giving the
///    relative correction applied only after emitting `1`.
/// 3. RotZ, RotY, RotZ on the memory form the shared local unitary.
///
/// The Kraus pair therefore has the form `K_0 = U_0 C`, `K_1 = U_1 S` with
/// `C = diag(cos(a/2), cos((a+b)/2))`.
pub fn universal_1q_step() -> CircuitTemplate {
    let (mem, out) = (0, 1);
    let gates = vec![
        Gate::crot(GateKind::CRotY, mem, out, 0),
        Gate::rot(GateKind::RotY, mem, 1),
        Gate::rot(GateKind::RotY, out, 2),
        Gate::crot(GateKind::CRotY, out, mem, 3),
        Gate::crot(GateKind::CRotZ, out, mem, 4),
        Gate::rot(GateKind::RotZ, mem, 5),
        Gate::rot(GateKind::RotY, mem, 6),
        Gate::rot(GateKind::RotZ, mem, 7),
    ];
    CircuitTemplate::new(2, gates, 8).expect("static template is valid")
}

/// Recurrent model with one memory qubit built on [`universal_1q_step`].
pub fn build_universal_1q_memory(horizon: Horizon) -> Result<RecurrentModel> {
    RecurrentModel::new(1, 1, universal_1q_step(), horizon)
}

/// Recurrent model whose step is a hardware-efficient template over
/// `memory_qubits` memory qubits followed by one output qubit.
pub fn build_recurrent_hea(memory_qubits: usize, layers: usize, horizon: Horizon) -> Result<RecurrentModel> {
    if memory_qubits == 0 {
        return invalid("a recurrent model needs at least one memory qubit");
    }
    let step = hardware_efficient(memory_qubits + 1, layers)?;
    RecurrentModel::new(memory_qubits, 1, step, horizon)
}

/// Non-recurrent baseline measured on `horizon.past + horizon.future` qubits.
pub fn build_born_machine(layers: usize, horizon: Horizon) -> Result<BornMachine> {
    let qubits = horizon.total();
    if qubits < 2 {
        return invalid("a Born machine needs at least two qubits");
    }
    BornMachine::new(hardware_efficient(qubits, layers)?, horizon)
}
