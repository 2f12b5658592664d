//! JSON model documents (checkpoints).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BornMachine, CircuitTemplate, Horizon, ModelKind, RecurrentModel, SequenceModel};
use crate::error::{invalid, Result};
use crate::qsim::Gate;

/// Serialized model with its parameters.
///
/// The gate list is authoritative; `kind` and `layers` are descriptive. For
/// Born machines `memory_qubits` is 0 and `output_qubits` is the register size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub kind: ModelKind,
    pub memory_qubits: usize,
    pub output_qubits: usize,
    pub layers: usize,
    pub past_len: usize,
    pub future_len: usize,
    pub num_slots: usize,
    pub gates: Vec<Gate>,
    pub theta: Vec<f64>,
}

impl ModelDocument {
    pub fn new(kind: ModelKind, model: &SequenceModel, theta: &[f64]) -> Result<Self> {
        model.check_theta(theta)?;
        let horizon = model.horizon();
        let (memory_qubits, output_qubits) = match model {
            SequenceModel::Recurrent(r) => (r.memory_qubits(), r.output_qubits()),
            SequenceModel::Born(b) => (0, b.template().num_qubits()),
        };
        Ok(Self {
            kind,
            memory_qubits,
            output_qubits,
            layers: kind.layers(),
            past_len: horizon.past,
            future_len: horizon.future,
            num_slots: model.num_slots(),
            gates: model.template().gates().to_vec(),
            theta: theta.to_vec(),
        })
    }

    /// Rebuilds the model and returns it with the stored parameters.
    pub fn to_model(&self) -> Result<(SequenceModel, Vec<f64>)> {
        let horizon = Horizon::new(self.past_len, self.future_len)?;
        let model = if self.memory_qubits == 0 {
            let template = CircuitTemplate::new(self.output_qubits, self.gates.clone(), self.num_slots)?;
            SequenceModel::Born(BornMachine::new(template, horizon)?)
        } else {
            let template =
                CircuitTemplate::new(self.memory_qubits + self.output_qubits, self.gates.clone(), self.num_slots)?;
            SequenceModel::Recurrent(RecurrentModel::new(self.memory_qubits, self.output_qubits, template, horizon)?)
        };
        if self.theta.len() != self.num_slots {
            return invalid(format!("document lists {} parameters for {} slots", self.theta.len(), self.num_slots));
        }
        Ok((model, self.theta.clone()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documents_round_trip() {
        let h = Horizon::new(3, 1).unwrap();
        for kind in [ModelKind::Recurrent1, ModelKind::Recurrent2, ModelKind::Born] {
            let model = kind.build(h).unwrap();
            let theta: Vec<f64> = (0..model.num_slots()).map(|i| (i as f64 * 0.731).sin() * 3.0).collect();
            let doc = ModelDocument::new(kind, &model, &theta).unwrap();
            let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
            assert_eq!(back, doc);
            let (rebuilt, t2) = back.to_model().unwrap();
            assert_eq!(rebuilt, model);
            assert_eq!(t2, theta);
        }
    }

    #[test]
    fn json_shape() {
        let model = ModelKind::Recurrent1.build(Horizon::new(1, 1).unwrap()).unwrap();
        let doc = ModelDocument::new(ModelKind::Recurrent1, &model, &[0.0; 8]).unwrap();
        let value: serde_json::Value = serde_json::from_str(&doc.to_json().unwrap()).unwrap();
        for key in ["kind", "memory_qubits", "output_qubits", "layers", "gates", "theta"] {
            assert!(value.get(key).is_some(), "{key}");
        }
        assert_eq!(value["kind"], "recurrent1");
        assert_eq!(value["gates"][0]["kind"], "CRotY");
        assert_eq!(value["gates"][0]["angle"]["slot"], 0);
    }
}
