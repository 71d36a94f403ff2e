//! Gate set tomography under the Pauli ansatz: experiment design, Gram
//! matrices, the single-qubit likelihood fit and the linear `MS_YY` solve.

mod dataset;
mod fit;
mod ms;

use serde::{Deserialize, Serialize};

use crate::device::{Device, ExperimentalSetting, ModelDoc, PauliModel};
use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{ideal_ptm, Gate1, GateLabel, PauliChannel};

pub use dataset::{GstDataset, DATASET_SCHEMA_VERSION};
pub use fit::{fit_observations, likelihood, FitOptions, Observation, SingleQubitFit};
pub use ms::{
    all_ms_settings, characterize_ms_from, derive_ms_zz, select_ms_settings, MsFit, MsObservation,
    NEGATIVE_RATE_TOLERANCE,
};

pub const DEFAULT_SHOTS: u64 = 10_000;
pub const DEFAULT_MS_SHOTS: u64 = 3_000;
pub const ESTIMATE_SCHEMA_VERSION: u32 = 1;

/// Variance `Delta^2` assigned to an observed frequency `m` from `shots` shots.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum VarianceModel {
    /// `max(m (1 - m) / N, 1 / (4 N))`; the floor equals the largest binomial
    /// variance, so every setting gets the same weight.
    #[default]
    QuarterShotFloor,
    /// Binomial variance of the add-half smoothed frequency `(m N + 1/2) / (N + 1)`.
    /// Weights near-deterministic settings heavily, which biases the rates upward
    /// at modest shot counts.
    Smoothed,
}

impl VarianceModel {
    pub fn variance(self, freq: f64, shots: u64) -> f64 {
        let n = shots as f64;
        match self {
            VarianceModel::QuarterShotFloor => {
                let m = freq.clamp(0.0, 1.0);
                (m * (1.0 - m) / n).max(0.25 / n)
            }
            VarianceModel::Smoothed => {
                let m = ((freq.clamp(0.0, 1.0) * n + 0.5) / (n + 1.0)).clamp(0.0, 1.0);
                m * (1.0 - m) / n
            }
        }
    }
}

/// Single-qubit GST settings for `qubit` of an `n`-qubit register.
///
/// On two qubits the gate acts on `qubit` alone and the spectator gets the
/// `I` preparation and measurement fiducials.
pub fn design_single_qubit(n: usize, qubit: usize, shots: u64) -> Result<Vec<ExperimentalSetting>> {
    if qubit >= n || !(1..=2).contains(&n) {
        return Err(PecError::InvalidArgument(format!("no qubit {qubit} on {n} qubit(s)")));
    }
    let mut out = Vec::with_capacity(132);
    for i in 0..4 {
        for g in Gate1::ALL {
            for k in 0..3 {
                out.push(match (n, qubit) {
                    (1, _) => ExperimentalSetting::new(i, vec![GateLabel::One(g)], Some(k), shots),
                    (_, 0) => ExperimentalSetting::new(4 * i, vec![GateLabel::Local(g, Gate1::I)], Some(3 * k + 2), shots),
                    _ => ExperimentalSetting::new(i, vec![GateLabel::Local(Gate1::I, g)], Some(6 + k), shots),
                });
            }
        }
    }
    Ok(out)
}

/// The 15 `MS_YY` settings picked by [`select_ms_settings`].
pub fn design_ms(shots: u64) -> Result<Vec<ExperimentalSetting>> {
    Ok(select_ms_settings(&all_ms_settings())?
        .into_iter()
        .map(|(i, k)| ExperimentalSetting::new(i, vec![GateLabel::MsYy], Some(k), shots))
        .collect())
}

/// Full design: 132 settings on one qubit; per-qubit blocks plus the MS step on two.
pub fn design_experiments(n: usize, shots: u64) -> Result<Vec<ExperimentalSetting>> {
    match n {
        1 => design_single_qubit(1, 0, shots),
        2 => {
            let mut v = design_single_qubit(2, 0, shots)?;
            v.extend(design_single_qubit(2, 1, shots)?);
            v.extend(design_ms(shots)?);
            Ok(v)
        }
        _ => Err(PecError::InvalidArgument(format!("GST supports 1 or 2 qubits, not {n}"))),
    }
}

/// Maps a record's setting back to single-qubit `(i, g, k)` on `qubit`, if it is one.
fn single_qubit_coordinates(n: usize, qubit: usize, s: &ExperimentalSetting) -> Option<(usize, Gate1, usize)> {
    let k = s.meas?;
    match (n, qubit, s.gates.as_slice()) {
        (1, 0, [GateLabel::One(g)]) => Some((s.init, *g, k)),
        (2, 0, [GateLabel::Local(g, Gate1::I)]) if s.init % 4 == 0 && k % 3 == 2 => Some((s.init / 4, *g, k / 3)),
        (2, 1, [GateLabel::Local(Gate1::I, g)]) if s.init < 4 && k / 3 == 2 => Some((s.init, *g, k % 3)),
        _ => None,
    }
}

/// Probability that `qubit` reads 0, from a full outcome distribution.
fn marginal_zero(n: usize, qubit: usize, freqs: &[f64]) -> f64 {
    let bit = 1 << (n - 1 - qubit);
    freqs
        .iter()
        .enumerate()
        .filter(|(b, _)| b & bit == 0)
        .map(|(_, f)| f)
        .sum()
}

/// Readout-corrected single-qubit observations of `qubit`.
pub fn observations(data: &GstDataset, qubit: usize, variance: VarianceModel) -> Result<Vec<Observation>> {
    let corrected = data.corrected()?;
    Ok(data
        .records
        .iter()
        .zip(&corrected)
        .filter_map(|(rec, f)| {
            let (init, gate, meas) = single_qubit_coordinates(data.n, qubit, &rec.setting)?;
            let freq = marginal_zero(data.n, qubit, f);
            Some(Observation {
                init,
                gate,
                meas,
                freq,
                variance: variance.variance(freq, rec.shots()),
            })
        })
        .collect())
}

/// Infinite-shot observations of `qubit` on `device`, weighted as if `shots` were taken.
pub fn exact_observations(device: &Device, qubit: usize, shots: u64) -> Result<Vec<Observation>> {
    design_single_qubit(device.n(), qubit, shots)?
        .iter()
        .map(|s| {
            let (init, gate, meas) = single_qubit_coordinates(device.n(), qubit, s).expect("designed setting");
            let freq = marginal_zero(device.n(), qubit, &device.outcome_probabilities(&device.final_state(s)?)?);
            Ok(Observation {
                init,
                gate,
                meas,
                freq,
                variance: VarianceModel::QuarterShotFloor.variance(freq, shots),
            })
        })
        .collect()
}

/// Readout-corrected `|00>` frequencies of the `MS_YY` records.
pub fn ms_observations(data: &GstDataset) -> Result<Vec<MsObservation>> {
    let corrected = data.corrected()?;
    Ok(data
        .records
        .iter()
        .zip(&corrected)
        .filter(|(rec, _)| rec.setting.gates == [GateLabel::MsYy] && rec.setting.meas.is_some())
        .map(|(rec, f)| MsObservation {
            init: rec.setting.init,
            meas: rec.setting.meas.unwrap_or(0),
            freq: f[0],
        })
        .collect())
}

/// Infinite-shot `MS_YY` observations for the selected design.
pub fn exact_ms_observations(device: &Device) -> Result<Vec<MsObservation>> {
    design_ms(1)?
        .iter()
        .map(|s| {
            Ok(MsObservation {
                init: s.init,
                meas: s.meas.unwrap_or(0),
                freq: device.outcome_probabilities(&device.final_state(s)?)?[0],
            })
        })
        .collect()
}

/// Gram matrix of `qubit`: rows `I, X, Y, Z`, columns the four prepared states.
///
/// Repeated settings are averaged.
pub fn gram_from_observations(obs: &[Observation]) -> Result<Matrix<f64>> {
    let mut g = Matrix::zeros(4, 4);
    for col in 0..4 {
        g[(0, col)] = 1.0;
        for (row, k) in [(1, 0), (2, 1), (3, 2)] {
            let hits: Vec<f64> = obs
                .iter()
                .filter(|o| o.init == col && o.gate == Gate1::I && o.meas == k)
                .map(|o| 2.0 * o.freq - 1.0)
                .collect();
            if hits.is_empty() {
                return Err(PecError::IncompleteData(format!(
                    "no data for preparation {col} with measurement fiducial {k}"
                )));
            }
            g[(row, col)] = hits.iter().sum::<f64>() / hits.len() as f64;
        }
    }
    Ok(g)
}

pub fn estimate_gram(data: &GstDataset, qubit: usize) -> Result<Matrix<f64>> {
    gram_from_observations(&observations(data, qubit, VarianceModel::default())?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GstOptions {
    pub fit: FitOptions,
    pub variance: VarianceModel,
    pub ms_negative_tolerance: f64,
}

impl Default for GstOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            variance: VarianceModel::default(),
            ms_negative_tolerance: NEGATIVE_RATE_TOLERANCE,
        }
    }
}

/// Characterized gate set and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct GstEstimate {
    /// Estimated rates of every gate plus the prepared state of each qubit.
    pub model: PauliModel,
    /// Per-qubit Gram matrices.
    pub gram: Vec<Matrix<f64>>,
    /// Per-qubit achieved log-likelihood.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub ms: Option<MsFit>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MsDoc {
    settings: Vec<(usize, usize)>,
    condition: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateDoc {
    schema_version: u32,
    n: usize,
    converged: bool,
    log_likelihood: Vec<f64>,
    gram: Vec<Vec<Vec<f64>>>,
    model: ModelDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ms: Option<MsDoc>,
}

impl GstEstimate {
    /// Assembles the per-qubit fits into one estimate.
    pub fn from_fits(fits: &[SingleQubitFit], gram: Vec<Matrix<f64>>, ms: Option<MsFit>) -> Result<Self> {
        let model = PauliModel {
            qubits: fits.iter().map(|f| f.model.clone()).collect(),
            ms_yy: ms.as_ref().map(|m| m.channel.clone()),
        };
        model.validate()?;
        Ok(Self {
            model,
            gram,
            log_likelihood: fits.iter().map(|f| f.log_likelihood).collect(),
            converged: fits.iter().all(|f| f.converged),
            ms,
        })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn gate_rates(&self, gate: &GateLabel) -> Result<PauliChannel> {
        match *gate {
            GateLabel::One(g) => Ok(self.model.qubit(0)?.channel(g)?.clone()),
            GateLabel::Local(a, b) => self.model.qubit(0)?.channel(a)?.tensor(self.model.qubit(1)?.channel(b)?),
            GateLabel::MsYy => Ok(self.model.ms_yy_channel()?.clone()),
            GateLabel::MsZz => Err(PecError::InvalidArgument(
                "MS_ZZ is a composite; use its PTM".into(),
            )),
        }
    }

    /// `estimated PTM - ideal PTM` of a gate.
    pub fn ptm_difference(&self, gate: &GateLabel) -> Result<Matrix<f64>> {
        self.model.gate_ptm(gate)?.matrix().sub(ideal_ptm::<f64>(gate).matrix())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EstimateDoc {
            schema_version: ESTIMATE_SCHEMA_VERSION,
            n: self.n(),
            converged: self.converged,
            log_likelihood: self.log_likelihood.clone(),
            gram: self
                .gram
                .iter()
                .map(|g| (0..g.rows()).map(|r| g.row(r).to_vec()).collect())
                .collect(),
            model: ModelDoc::from(&self.model),
            ms: self.ms.as_ref().map(|m| MsDoc {
                settings: m.settings.clone(),
                condition: m.condition,
            }),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| PecError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EstimateDoc = serde_json::from_str(text).map_err(|e| PecError::Config(e.to_string()))?;
        if doc.schema_version != ESTIMATE_SCHEMA_VERSION {
            return Err(PecError::Config(format!(
                "unsupported estimate schema_version {}",
                doc.schema_version
            )));
        }
        let model = PauliModel::try_from(doc.model)?;
        if model.n() != doc.n {
            return Err(PecError::Config("estimate qubit count disagrees with its model".into()));
        }
        let gram = doc.gram.iter().map(|g| Matrix::from_rows(g)).collect::<Result<_>>()?;
        let ms = match (doc.ms, &model.ms_yy) {
            (Some(m), Some(c)) => Some(MsFit {
                channel: c.clone(),
                settings: m.settings,
                condition: m.condition,
            }),
            _ => None,
        };
        Ok(Self {
            model,
            gram,
            log_likelihood: doc.log_likelihood,
            converged: doc.converged,
            ms,
        })
    }
}

/// Fits one qubit of `data`.
pub fn fit_single_qubit(data: &GstDataset, qubit: usize, options: GstOptions) -> Result<SingleQubitFit> {
    fit_observations(&observations(data, qubit, options.variance)?, options.fit)
}

/// `MS_YY` channel from the MS records of `data` given characterized singles.
pub fn characterize_ms(data: &GstDataset, singles: &PauliModel, negative_tolerance: f64) -> Result<MsFit> {
    characterize_ms_from(&ms_observations(data)?, singles, negative_tolerance)
}

/// Whole-dataset characterization: per-qubit fits, then the MS step if `n = 2`.
pub fn characterize(data: &GstDataset, options: GstOptions) -> Result<GstEstimate> {
    let mut fits = Vec::with_capacity(data.n);
    let mut grams = Vec::with_capacity(data.n);
    for q in 0..data.n {
        let obs = observations(data, q, options.variance)?;
        grams.push(gram_from_observations(&obs)?);
        fits.push(fit_observations(&obs, options.fit)?);
    }
    let ms = if data.n == 2 {
        let singles = PauliModel {
            qubits: fits.iter().map(|f| f.model.clone()).collect(),
            ms_yy: None,
        };
        Some(characterize_ms(data, &singles, options.ms_negative_tolerance)?)
    } else {
        None
    };
    GstEstimate::from_fits(&fits, grams, ms)
}

/// Characterization from shot-free probabilities of `device`.
pub fn characterize_exact(device: &Device, options: FitOptions) -> Result<GstEstimate> {
    let mut fits = Vec::with_capacity(device.n());
    let mut grams = Vec::with_capacity(device.n());
    for q in 0..device.n() {
        let obs = exact_observations(device, q, DEFAULT_SHOTS)?;
        grams.push(gram_from_observations(&obs)?);
        fits.push(fit_observations(&obs, options)?);
    }
    let ms = if device.n() == 2 {
        let singles = PauliModel {
            qubits: fits.iter().map(|f| f.model.clone()).collect(),
            ms_yy: None,
        };
        Some(characterize_ms_from(&exact_ms_observations(device)?, &singles, NEGATIVE_RATE_TOLERANCE)?)
    } else {
        None
    };
    GstEstimate::from_fits(&fits, grams, ms)
}

/// Process fidelity of a gate's characterized channel, `lambda` averaged.
pub fn gate_process_fidelity(model: &PauliModel, gate: &GateLabel) -> Result<f64> {
    let ideal = ideal_ptm::<f64>(gate);
    model.gate_ptm(gate)?.process_fidelity(&ideal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{DeviceSpec, QubitModel};
    use crate::pauli::PauliChannel;

    #[test]
    fn design_sizes() {
        let d = design_experiments(1, DEFAULT_SHOTS).unwrap();
        assert_eq!(d.len(), 132);
        assert!(d.iter().all(|s| s.full_sequence(1).unwrap().len() == 3 && s.shots == 10_000));
        assert_eq!(design_ms(3000).unwrap().len(), 15);
        assert_eq!(design_experiments(2, 10).unwrap().len(), 132 * 2 + 15);
        assert!(design_experiments(3, 10).is_err());
    }

    #[test]
    fn ideal_gram_matrix() {
        let dev = Device::new(DeviceSpec::noiseless(1)).unwrap();
        let g = gram_from_observations(&exact_observations(&dev, 0, 100).unwrap()).unwrap();
        let expected = Matrix::from_rows(&[
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.0, 0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.0, -1.0],
            vec![1.0, -1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(g.max_abs_diff(&expected).unwrap() < 1e-15, "{g:?}");
    }

    #[test]
    fn depolarized_preparation_shrinks_the_gram_matrix() {
        let mut model = PauliModel::noiseless(1);
        model.qubits[0].prep = [0.0, 0.0, 0.9];
        let dev = Device::new(DeviceSpec::from_model("p", model)).unwrap();
        let g = gram_from_observations(&exact_observations(&dev, 0, 100).unwrap()).unwrap();
        let ideal = gram_from_observations(&exact_observations(&Device::new(DeviceSpec::noiseless(1)).unwrap(), 0, 100).unwrap()).unwrap();
        for r in 1..4 {
            for c in 0..4 {
                assert!((g[(r, c)] - 0.9 * ideal[(r, c)]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_qubit_marginals_reproduce_single_qubit_fits() {
        let ch = PauliChannel::new(1, vec![0.999, 0.0004, 0.0003, 0.0003]).unwrap();
        let mut q0 = QubitModel::uniform(ch.clone());
        q0.prep = [0.02, 0.0, (1.0f64 - 0.0004).sqrt()];
        let q1 = QubitModel::uniform(PauliChannel::new(1, vec![0.998, 0.001, 0.0005, 0.0005]).unwrap());
        let mut model = PauliModel::noiseless(2);
        model.qubits = vec![q0.clone(), q1.clone()];
        let dev = Device::new(DeviceSpec::from_model("two", model)).unwrap();
        for (q, truth) in [(0, &q0), (1, &q1)] {
            let fit = fit_observations(&exact_observations(&dev, q, 10_000).unwrap(), FitOptions::default()).unwrap();
            for g in Gate1::ALL {
                let a = fit.model.channel(g).unwrap().rates();
                let b = truth.channel(g).unwrap().rates();
                assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-8), "qubit {q} {g} {a:?} {b:?} {} {} {}", fit.iterations, fit.converged, fit.log_likelihood);
            }
        }
    }

    #[test]
    fn ms_channel_is_an_exact_linear_inverse() {
        let mut model = PauliModel::noiseless(2);
        let mut rates = vec![0.0; 16];
        rates[0] = 0.990;
        rates[12] = 0.004; // ZI
        rates[3] = 0.003; // IZ
        rates[15] = 0.003; // ZZ
        model.ms_yy = Some(PauliChannel::new(2, rates.clone()).unwrap());
        let ch = PauliChannel::new(1, vec![0.998, 0.001, 0.0005, 0.0005]).unwrap();
        model.qubits = vec![QubitModel::uniform(ch.clone()), QubitModel::uniform(ch)];
        model.qubits[1].prep = [0.0, 0.03, (1.0f64 - 0.0009).sqrt()];
        let dev = Device::new(DeviceSpec::from_model("ms", model.clone())).unwrap();
        let singles = PauliModel { ms_yy: None, ..model };
        let fit = characterize_ms_from(&exact_ms_observations(&dev).unwrap(), &singles, NEGATIVE_RATE_TOLERANCE).unwrap();
        assert_eq!(fit.settings.len(), 15);
        for (x, y) in fit.channel.rates().iter().zip(&rates) {
            assert!((x - y).abs() < 1e-10, "{:?}", fit.channel.rates());
        }
    }

    #[test]
    fn identity_ms_noise_gives_zero_rates() {
        let dev = Device::new(DeviceSpec::noiseless(2)).unwrap();
        let singles = PauliModel {
            ms_yy: None,
            ..PauliModel::noiseless(2)
        };
        let fit = characterize_ms_from(&exact_ms_observations(&dev).unwrap(), &singles, NEGATIVE_RATE_TOLERANCE).unwrap();
        assert!(fit.channel.rates()[1..].iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn ms_zz_from_ideal_singles_is_ideal() {
        let singles = PauliModel::noiseless(2);
        let zz = derive_ms_zz(&singles, &ideal_ptm(&GateLabel::MsYy)).unwrap();
        assert!(zz.max_abs_diff(&ideal_ptm(&GateLabel::MsZz)).unwrap() < 1e-14);
    }

    #[test]
    fn noisy_sandwich_lowers_ms_zz_fidelity() {
        let mut model = PauliModel::noiseless(2);
        let ch = PauliChannel::new(1, vec![0.998, 0.001, 0.0005, 0.0005]).unwrap();
        model.qubits = vec![QubitModel::uniform(ch.clone()), QubitModel::uniform(ch)];
        model.ms_yy = Some(PauliChannel::depolarizing(2, 0.01).unwrap());
        let yy = gate_process_fidelity(&model, &GateLabel::MsYy).unwrap();
        let zz = gate_process_fidelity(&model, &GateLabel::MsZz).unwrap();
        assert!(zz < yy);
    }

    #[test]
    fn estimate_json_round_trip() {
        let dev = Device::new(DeviceSpec::noiseless(2)).unwrap();
        let est = characterize_exact(&dev, FitOptions::default()).unwrap();
        let back = GstEstimate::from_json(&est.to_json().unwrap()).unwrap();
        assert_eq!(back, est);
    }
}
