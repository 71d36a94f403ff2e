use serde::Deserialize;

use crate::device::model::{ModelDoc, PauliModel};
use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{Gate1, PauliChannel, PauliLabel};

pub const SCHEMA_VERSION: u32 = 1;

/// Device presets shipped with the crate.
pub const PRESET_NAMES: [&str; 3] = ["single-qubit-paper", "two-qubit-paper", "noiseless"];

const SINGLE_QUBIT_PAPER: &str = include_str!("../../presets/single-qubit-paper.toml");
const TWO_QUBIT_PAPER: &str = include_str!("../../presets/two-qubit-paper.toml");
const NOISELESS: &str = include_str!("../../presets/noiseless.toml");

/// Where a drifting rate lives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DriftTarget {
    Single { qubit: usize, gate: Gate1 },
    MsYy,
}

/// Linear ramp of one Pauli rate across a run: `p(t) = p(0) + slope · t` for
/// `t` in `[0, 1]`, with the identity rate absorbing the change.
#[derive(Clone, Debug, PartialEq)]
pub struct Drift {
    pub target: DriftTarget,
    pub pauli: PauliLabel,
    pub slope: f64,
}

impl Drift {
    fn shift(channel: &PauliChannel, pauli: PauliLabel, amount: f64) -> Result<PauliChannel> {
        let mut rates = channel.rates().to_vec();
        rates[pauli.index()] += amount;
        rates[0] -= amount;
        PauliChannel::new(channel.n(), rates)
    }

    /// The model at time fraction `t`.
    pub fn apply(&self, model: &PauliModel, t: f64) -> Result<PauliModel> {
        let mut out = model.clone();
        let amount = self.slope * t.clamp(0.0, 1.0);
        match self.target {
            DriftTarget::Single { qubit, gate } => {
                let qm = out
                    .qubits
                    .get_mut(qubit)
                    .ok_or_else(|| PecError::Config(format!("drift names missing qubit {qubit}")))?;
                let c = qm.channel(gate)?.clone();
                qm.gates.insert(gate, Self::shift(&c, self.pauli, amount)?);
            }
            DriftTarget::MsYy => {
                let c = out.ms_yy_channel()?.clone();
                out.ms_yy = Some(Self::shift(&c, self.pauli, amount)?);
            }
        }
        Ok(out)
    }
}

/// Ground truth of the simulated device.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    /// True Pauli rates and prepared state.
    pub model: PauliModel,
    /// Column-stochastic `2^n x 2^n` confusion matrix, `C[observed][actual]`.
    pub readout: Matrix<f64>,
    /// `Omega_eff / Omega` for individually addressed pulses.
    pub crosstalk_ratio: f64,
    pub drift: Option<Drift>,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadoutDoc {
    confusion: Option<Vec<Vec<f64>>>,
    per_qubit: Option<Vec<[[f64; 2]; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DriftDoc {
    gate: String,
    #[serde(default)]
    qubit: usize,
    pauli: String,
    slope: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    schema_version: u32,
    #[serde(default)]
    name: Option<String>,
    n: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    crosstalk_ratio: f64,
    #[serde(default)]
    readout: Option<ReadoutDoc>,
    #[serde(default)]
    drift: Option<DriftDoc>,
    qubits: Vec<crate::device::model::QubitDoc>,
    #[serde(default)]
    ms_yy: Option<PauliChannel>,
}

impl DeviceSpec {
    /// Noiseless device with ideal readout and no crosstalk.
    pub fn noiseless(n: usize) -> Self {
        Self::from_model("noiseless", PauliModel::noiseless(n))
    }

    pub fn from_model(name: &str, model: PauliModel) -> Self {
        let dim = 1 << model.n();
        Self {
            name: name.to_string(),
            model,
            readout: Matrix::identity(dim),
            crosstalk_ratio: 0.0,
            drift: None,
            seed: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "single-qubit-paper" => SINGLE_QUBIT_PAPER,
            "two-qubit-paper" => TWO_QUBIT_PAPER,
            "noiseless" => NOISELESS,
            _ => {
                return Err(PecError::Config(format!(
                    "unknown preset `{name}` (available: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Self::from_toml_str(text)
    }

    /// Parses a versioned device config; errors carry the line and column.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: DeviceDoc = toml::from_str(text).map_err(|e| PecError::Config(e.to_string()))?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: DeviceDoc) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(PecError::Config(format!(
                "unsupported device schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        if doc.qubits.len() != doc.n {
            return Err(PecError::Config(format!(
                "n = {} but {} [[qubits]] tables given",
                doc.n,
                doc.qubits.len()
            )));
        }
        let model = PauliModel::try_from(ModelDoc {
            qubits: doc.qubits,
            ms_yy: doc.ms_yy,
        })?;
        let dim = 1usize << doc.n;
        let readout = match doc.readout {
            None => Matrix::identity(dim),
            Some(ReadoutDoc {
                confusion: Some(rows),
                per_qubit: None,
            }) => Matrix::from_rows(&rows)?,
            Some(ReadoutDoc {
                confusion: None,
                per_qubit: Some(blocks),
            }) => {
                if blocks.len() != doc.n {
                    return Err(PecError::Config(format!(
                        "readout.per_qubit needs {} matrices, got {}",
                        doc.n,
                        blocks.len()
                    )));
                }
                blocks
                    .iter()
                    .map(|b| Matrix::from_rows(&[b[0].to_vec(), b[1].to_vec()]))
                    .try_fold(Matrix::identity(1), |acc, m| m.map(|m| acc.kron(&m)))?
            }
            Some(_) => {
                return Err(PecError::Config(
                    "readout needs exactly one of `confusion` or `per_qubit`".into(),
                ))
            }
        };
        let drift = doc
            .drift
            .map(|d| -> Result<Drift> {
                let pauli: PauliLabel = d.pauli.parse()?;
                let target = if d.gate == "MS_YY" {
                    DriftTarget::MsYy
                } else {
                    DriftTarget::Single {
                        qubit: d.qubit,
                        gate: d.gate.parse()?,
                    }
                };
                Ok(Drift {
                    target,
                    pauli,
                    slope: d.slope,
                })
            })
            .transpose()?;
        let spec = DeviceSpec {
            name: doc.name.unwrap_or_else(|| "custom".into()),
            model,
            readout,
            crosstalk_ratio: doc.crosstalk_ratio,
            drift,
            seed: doc.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let dim = 1usize << self.n();
        if self.readout.rows() != dim || self.readout.cols() != dim {
            return Err(PecError::Config(format!("readout confusion must be {dim}x{dim}")));
        }
        for c in 0..dim {
            let col: Vec<f64> = (0..dim).map(|r| self.readout[(r, c)]).collect();
            if col.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (col.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(PecError::Config(format!(
                    "readout confusion column {c} is not a probability vector"
                )));
            }
        }
        if !(self.crosstalk_ratio >= 0.0) {
            return Err(PecError::Config("crosstalk_ratio must be >= 0".into()));
        }
        if let Some(d) = &self.drift {
            let expected_n = match d.target {
                DriftTarget::MsYy => 2,
                DriftTarget::Single { .. } => 1,
            };
            if d.pauli.n() != expected_n || d.pauli.is_identity() {
                return Err(PecError::Config(format!("drift Pauli `{}` does not fit its gate", d.pauli)));
            }
            d.apply(&self.model, 1.0)
                .map_err(|e| PecError::Config(format!("drift leaves the simplex: {e}")))?;
        }
        Ok(())
    }

    pub fn with_crosstalk(mut self, ratio: f64) -> Self {
        self.crosstalk_ratio = ratio;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in PRESET_NAMES {
            let spec = DeviceSpec::preset(name).unwrap();
            assert!(spec.validate().is_ok(), "{name}");
        }
        assert_eq!(DeviceSpec::preset("two-qubit-paper").unwrap().n(), 2);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let text = "schema_version = 1\nn = 1\nbogus = 3\n[[qubits]]\nprep = [0.0, 0.0, 1.0]\n";
        let err = DeviceSpec::from_toml_str(text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn rejects_wrong_schema_and_bad_readout() {
        let base = "n = 1\n[[qubits]]\nprep = [0.0, 0.0, 1.0]\n";
        assert!(DeviceSpec::from_toml_str(&format!("schema_version = 2\n{base}")).is_err());
        let bad = format!("schema_version = 1\n{base}[readout]\nconfusion = [[0.9, 0.0], [0.2, 1.0]]\n");
        assert!(DeviceSpec::from_toml_str(&bad).is_err());
        let ok = format!("schema_version = 1\n{base}[readout]\nconfusion = [[0.9, 0.05], [0.1, 0.95]]\n");
        assert!(DeviceSpec::from_toml_str(&ok).is_ok());
    }

    #[test]
    fn drift_ramps_one_rate() {
        let text = "schema_version = 1\nn = 1\n[[qubits]]\nprep = [0.0, 0.0, 1.0]\ndefault = [0.999, 0.0005, 0.0003, 0.0002]\n[drift]\ngate = \"X_pi/2\"\npauli = \"Z\"\nslope = 1e-3\n";
        let spec = DeviceSpec::from_toml_str(text).unwrap();
        let d = spec.drift.as_ref().unwrap();
        let later = d.apply(&spec.model, 0.5).unwrap();
        let r = later.qubits[0].channel(Gate1::XHalfPi).unwrap().rates().to_vec();
        assert!((r[3] - 0.0007).abs() < 1e-15);
        assert!((r[0] - 0.9985).abs() < 1e-15);
        assert_eq!(later.qubits[0].channel(Gate1::XPi), spec.model.qubits[0].channel(Gate1::XPi));
    }
}
