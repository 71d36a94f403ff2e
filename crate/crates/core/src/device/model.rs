use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{PecError, Result};
use crate::pauli::{
    channel_ptm, compose, ideal_ptm, tensor, Gate1, GateLabel, PauliChannel, PauliTransferMatrix,
    PauliVector,
};

type Ptm = PauliTransferMatrix<f64>;

/// Pauli-ansatz description of one qubit: prepared state and per-gate channels.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitModel {
    /// Bloch vector of the prepared state `rho_0`.
    pub prep: [f64; 3],
    pub gates: BTreeMap<Gate1, PauliChannel>,
}

impl QubitModel {
    pub fn noiseless() -> Self {
        Self::uniform(PauliChannel::identity(1))
    }

    /// Every gate of `G1` carries the same channel; the state is `|0>`.
    pub fn uniform(channel: PauliChannel) -> Self {
        Self {
            prep: [0.0, 0.0, 1.0],
            gates: Gate1::ALL.into_iter().map(|g| (g, channel.clone())).collect(),
        }
    }

    pub fn channel(&self, gate: Gate1) -> Result<&PauliChannel> {
        self.gates
            .get(&gate)
            .ok_or_else(|| PecError::UnconfiguredGate(gate.to_string()))
    }

    /// Noisy single-qubit PTM `Lambda_g R_g`.
    pub fn gate_ptm(&self, gate: Gate1) -> Result<Ptm> {
        compose(&channel_ptm(self.channel(gate)?), &ideal_ptm(&GateLabel::One(gate)))
    }

    pub fn state(&self) -> PauliVector<f64> {
        PauliVector::from_bloch(self.prep)
    }
}

/// Gate and state model shared by the simulated device and by tomography estimates.
///
/// Two-qubit local gates are tensor products of the per-qubit models, `MS_YY`
/// carries its own 16-rate channel, and `MS_ZZ` is always the composite
/// `X_{-π/2}⊗X_{-π/2} · MS_YY · X_{π/2}⊗X_{π/2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliModel {
    pub qubits: Vec<QubitModel>,
    pub ms_yy: Option<PauliChannel>,
}

impl PauliModel {
    pub fn noiseless(n: usize) -> Self {
        Self {
            qubits: vec![QubitModel::noiseless(); n],
            ms_yy: (n == 2).then(|| PauliChannel::identity(2)),
        }
    }

    pub fn n(&self) -> usize {
        self.qubits.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.n()) {
            return Err(PecError::Config(format!("unsupported qubit count {}", self.n())));
        }
        for (q, qm) in self.qubits.iter().enumerate() {
            let norm = qm.prep.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm <= 1.0 + 1e-12) {
                return Err(PecError::Config(format!(
                    "qubit {q}: prepared Bloch vector has length {norm} > 1"
                )));
            }
            if qm.gates.values().any(|c| c.n() != 1) {
                return Err(PecError::Config(format!("qubit {q}: gate channels must have 4 rates")));
            }
        }
        if let Some(ms) = &self.ms_yy {
            if self.n() != 2 || ms.n() != 2 {
                return Err(PecError::Config("ms_yy needs a two-qubit model with 16 rates".into()));
            }
        }
        Ok(())
    }

    pub fn qubit(&self, q: usize) -> Result<&QubitModel> {
        self.qubits
            .get(q)
            .ok_or_else(|| PecError::InvalidArgument(format!("no qubit {q} in a {}-qubit model", self.n())))
    }

    pub fn prepared_state(&self) -> PauliVector<f64> {
        let mut state = self.qubits[0].state();
        for qm in &self.qubits[1..] {
            state = state.tensor(&qm.state()).expect("at most two qubits");
        }
        state
    }

    pub fn ms_yy_channel(&self) -> Result<&PauliChannel> {
        self.ms_yy
            .as_ref()
            .ok_or_else(|| PecError::UnconfiguredGate("MS_YY".into()))
    }

    /// Noisy PTM of any gate of `G_n` under the Pauli ansatz.
    pub fn gate_ptm(&self, gate: &GateLabel) -> Result<Ptm> {
        if gate.n() != self.n() {
            return Err(PecError::DimensionMismatch {
                expected: self.n(),
                found: gate.n(),
            });
        }
        match *gate {
            GateLabel::One(g) => self.qubits[0].gate_ptm(g),
            GateLabel::Local(a, b) => tensor(&self.qubits[0].gate_ptm(a)?, &self.qubits[1].gate_ptm(b)?),
            GateLabel::MsYy => compose(&channel_ptm(self.ms_yy_channel()?), &ideal_ptm(gate)),
            GateLabel::MsZz => {
                let ms = self.gate_ptm(&GateLabel::MsYy)?;
                derive_ms_zz_from(
                    &self.gate_ptm(&GateLabel::Local(Gate1::XHalfPi, Gate1::XHalfPi))?,
                    &ms,
                    &self.gate_ptm(&GateLabel::Local(Gate1::XMinusHalfPi, Gate1::XMinusHalfPi))?,
                )
            }
        }
    }

    /// `R_{F_i} |rho_0>>` for the preparation fiducial `i` of `S_n`.
    pub fn fiducial_state(&self, i: usize) -> Result<PauliVector<f64>> {
        let f = GateLabel::prep_fiducial(self.n(), i)?;
        self.gate_ptm(&f)?.apply(&self.prepared_state())
    }

    /// Single-qubit marginal model of qubit `q`.
    pub fn single(&self, q: usize) -> Result<PauliModel> {
        Ok(PauliModel {
            qubits: vec![self.qubit(q)?.clone()],
            ms_yy: None,
        })
    }

    /// Two-qubit model from independent single-qubit models.
    pub fn from_singles(q0: &PauliModel, q1: &PauliModel, ms_yy: Option<PauliChannel>) -> Result<Self> {
        if q0.n() != 1 || q1.n() != 1 {
            return Err(PecError::InvalidArgument("from_singles expects single-qubit models".into()));
        }
        let model = PauliModel {
            qubits: vec![q0.qubits[0].clone(), q1.qubits[0].clone()],
            ms_yy,
        };
        model.validate()?;
        Ok(model)
    }
}

/// `close · ms · open`, the sandwich that turns `MS_YY` into `MS_ZZ`.
pub fn derive_ms_zz_from(open: &Ptm, ms_yy: &Ptm, close: &Ptm) -> Result<Ptm> {
    compose(close, &compose(ms_yy, open)?)
}

/// Serialized form shared by device configs and tomography estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitDoc {
    pub prep: [f64; 3],
    /// Channel for every gate not listed in `gates`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<PauliChannel>,
    #[serde(default)]
    pub gates: BTreeMap<String, PauliChannel>,
}

impl TryFrom<QubitDoc> for QubitModel {
    type Error = PecError;

    fn try_from(doc: QubitDoc) -> Result<Self> {
        let mut gates = BTreeMap::new();
        if let Some(d) = &doc.default {
            for g in Gate1::ALL {
                gates.insert(g, d.clone());
            }
        }
        for (name, channel) in doc.gates {
            let g: Gate1 = name.parse()?;
            if channel.n() != 1 {
                return Err(PecError::Config(format!("gate `{name}` needs 4 rates")));
            }
            gates.insert(g, channel);
        }
        Ok(QubitModel { prep: doc.prep, gates })
    }
}

impl From<&QubitModel> for QubitDoc {
    fn from(m: &QubitModel) -> Self {
        QubitDoc {
            prep: m.prep,
            default: None,
            gates: m.gates.iter().map(|(g, c)| (g.to_string(), c.clone())).collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub qubits: Vec<QubitDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ms_yy: Option<PauliChannel>,
}

impl TryFrom<ModelDoc> for PauliModel {
    type Error = PecError;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        let model = PauliModel {
            qubits: doc
                .qubits
                .into_iter()
                .map(QubitModel::try_from)
                .collect::<Result<_>>()?,
            ms_yy: doc.ms_yy,
        };
        model.validate()?;
        Ok(model)
    }
}

impl From<&PauliModel> for ModelDoc {
    fn from(m: &PauliModel) -> Self {
        ModelDoc {
            qubits: m.qubits.iter().map(QubitDoc::from).collect(),
            ms_yy: m.ms_yy.clone(),
        }
    }
}

impl Serialize for PauliModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PauliModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        PauliModel::try_from(ModelDoc::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}
