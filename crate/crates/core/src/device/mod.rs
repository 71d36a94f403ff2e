//! The simulated noisy device: ground-truth noise, shot sampling, readout
//! confusion and single-qubit-pulse crosstalk.

mod model;
mod spec;
mod sweep;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{PecError, Result};
use crate::linalg::Matrix;
use crate::pauli::{
    channel_ptm, compose, ideal_ptm, rotation_ptm, tensor, Gate1, GateLabel, ObservableVector,
    PauliLabel, PauliTransferMatrix, PauliVector,
};
use crate::rng::stream_rng;

pub use model::{derive_ms_zz_from, ModelDoc, PauliModel, QubitDoc, QubitModel};
pub use spec::{DeviceSpec, Drift, DriftTarget, PRESET_NAMES, SCHEMA_VERSION};
pub use sweep::{calibrate_crosstalk_ratio, state_fidelity_sweep, SweepRow};

type Ptm = PauliTransferMatrix<f64>;

/// Probabilities may leave `[0, 1]` by this much from rounding before it counts as a bug.
const PROBABILITY_SLACK: f64 = 1e-9;

/// One circuit: preparation fiducial, gate sequence, optional measurement fiducial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentalSetting {
    /// Index into `S_n` (the preparation fiducials).
    pub init: usize,
    pub gates: Vec<GateLabel>,
    /// Index into the measurement fiducials; `None` reads out `Z` directly.
    pub meas: Option<usize>,
    pub shots: u64,
}

impl ExperimentalSetting {
    pub fn new(init: usize, gates: Vec<GateLabel>, meas: Option<usize>, shots: u64) -> Self {
        Self {
            init,
            gates,
            meas,
            shots,
        }
    }

    /// `[F_i, gates..., F_k]` as applied on the device.
    pub fn full_sequence(&self, n: usize) -> Result<Vec<GateLabel>> {
        let mut seq = Vec::with_capacity(self.gates.len() + 2);
        seq.push(GateLabel::prep_fiducial(n, self.init)?);
        seq.extend_from_slice(&self.gates);
        if let Some(k) = self.meas {
            seq.push(GateLabel::measurement_fiducial(n, k)?);
        }
        Ok(seq)
    }
}

/// Outcome counts of one setting, indexed by bitstring (qubit 0 most significant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotRecord {
    pub setting: ExperimentalSetting,
    pub counts: Vec<u64>,
}

impl ShotRecord {
    pub fn zeros_count(&self) -> u64 {
        self.counts[0]
    }

    pub fn shots(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// PTMs of the whole gate set, indexed by [`GateLabel::dense_index`].
#[derive(Clone, Debug)]
pub struct GateTable {
    n: usize,
    ptms: Vec<Option<Ptm>>,
}

impl GateTable {
    /// Unconfigured gates are left empty and rejected on lookup.
    pub fn build(n: usize, mut f: impl FnMut(&GateLabel) -> Result<Ptm>) -> Result<Self> {
        let ptms = GateLabel::gate_set(n)
            .iter()
            .map(|g| match f(g) {
                Ok(p) => Ok(Some(p)),
                Err(PecError::UnconfiguredGate(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        Ok(Self { n, ptms })
    }

    pub fn from_model(model: &PauliModel) -> Result<Self> {
        Self::build(model.n(), |g| model.gate_ptm(g))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, gate: &GateLabel) -> Result<&Ptm> {
        if gate.n() != self.n {
            return Err(PecError::DimensionMismatch {
                expected: self.n,
                found: gate.n(),
            });
        }
        self.ptms[gate.dense_index()]
            .as_ref()
            .ok_or_else(|| PecError::UnconfiguredGate(gate.to_string()))
    }
}

fn one_qubit_identity() -> Ptm {
    PauliTransferMatrix::identity(1)
}

/// One individually addressed pulse of `gate` on `target` with its crosstalk
/// rotation on the neighbour, followed by the gate's channel on `target`.
fn pulse_ptm(model: &PauliModel, ratio: f64, target: usize, gate: Gate1) -> Result<Ptm> {
    let on_target = ideal_ptm::<f64>(&GateLabel::One(gate));
    let on_neighbour = if gate == Gate1::I || ratio == 0.0 {
        one_qubit_identity()
    } else {
        rotation_ptm(PauliLabel::new(&[gate.axis()])?, gate.angle() * ratio)
    };
    let noise = channel_ptm(model.qubit(target)?.channel(gate)?);
    let (rotation, channel) = match target {
        0 => (tensor(&on_target, &on_neighbour)?, tensor(&noise, &one_qubit_identity())?),
        1 => (tensor(&on_neighbour, &on_target)?, tensor(&one_qubit_identity(), &noise)?),
        _ => return Err(PecError::InvalidArgument(format!("no qubit {target}"))),
    };
    compose(&channel, &rotation)
}

/// Two-qubit PTM of a single-qubit rotation on `target` including crosstalk.
pub fn crosstalk_gate_ptm(spec: &DeviceSpec, gate: &GateLabel, target: usize) -> Result<Ptm> {
    if spec.n() != 2 {
        return Err(PecError::InvalidArgument("crosstalk needs a two-qubit device".into()));
    }
    match *gate {
        GateLabel::One(g) => pulse_ptm(&spec.model, spec.crosstalk_ratio, target, g),
        GateLabel::MsYy | GateLabel::MsZz => Err(PecError::InvalidArgument(format!(
            "{gate} uses global beams; crosstalk applies to single-qubit pulses only"
        ))),
        GateLabel::Local(..) => Err(PecError::InvalidArgument(format!(
            "{gate} is two pulses; pass one single-qubit rotation"
        ))),
    }
}

/// True PTM of `gate` on a device with the given model and crosstalk ratio.
fn true_gate_ptm(model: &PauliModel, ratio: f64, gate: &GateLabel) -> Result<Ptm> {
    if model.n() == 1 || ratio == 0.0 {
        return model.gate_ptm(gate);
    }
    match *gate {
        GateLabel::Local(a, b) => compose(&pulse_ptm(model, ratio, 1, b)?, &pulse_ptm(model, ratio, 0, a)?),
        GateLabel::MsZz => derive_ms_zz_from(
            &true_gate_ptm(model, ratio, &GateLabel::Local(Gate1::XHalfPi, Gate1::XHalfPi))?,
            &model.gate_ptm(&GateLabel::MsYy)?,
            &true_gate_ptm(model, ratio, &GateLabel::Local(Gate1::XMinusHalfPi, Gate1::XMinusHalfPi))?,
        ),
        _ => model.gate_ptm(gate),
    }
}

/// `Sum_b (-1)^{|b|} f_b`: `<Z>` for one qubit, `<Z (x) Z>` for two.
pub fn parity_expectation(freqs: &[f64]) -> f64 {
    freqs
        .iter()
        .enumerate()
        .map(|(b, &f)| if b.count_ones() % 2 == 0 { f } else { -f })
        .sum()
}

/// Multinomial draw by sequential binomials.
pub fn sample_counts<R: Rng + ?Sized>(probs: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass: f64 = probs.iter().sum();
    for (b, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if b + 1 == probs.len() {
            counts[b] = remaining;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = Binomial::new(remaining, q).expect("probability in [0, 1]").sample(rng);
        counts[b] = k;
        remaining -= k;
        mass -= p;
    }
    counts
}

/// A [`DeviceSpec`] with every gate PTM precomputed.
#[derive(Clone, Debug)]
pub struct Device {
    spec: DeviceSpec,
    model: PauliModel,
    table: GateTable,
    state: PauliVector<f64>,
    projectors: Vec<ObservableVector<f64>>,
    readout_inverse: Matrix<f64>,
}

impl Device {
    pub fn new(spec: DeviceSpec) -> Result<Self> {
        spec.validate()?;
        let model = spec.model.clone();
        Self::with_model(spec, model)
    }

    fn with_model(spec: DeviceSpec, model: PauliModel) -> Result<Self> {
        let n = spec.n();
        let table = GateTable::build(n, |g| true_gate_ptm(&model, spec.crosstalk_ratio, g))?;
        let readout_inverse = spec.readout.inverse()?;
        Ok(Self {
            state: model.prepared_state(),
            projectors: (0..1usize << n)
                .map(|b| ObservableVector::outcome_projector(n, b))
                .collect(),
            model,
            table,
            readout_inverse,
            spec,
        })
    }

    /// The device after a fraction `t` of the run has elapsed (only differs when drift is configured).
    pub fn at_time(&self, t: f64) -> Result<Device> {
        match &self.spec.drift {
            None => Ok(self.clone()),
            Some(d) => {
                let model = d.apply(&self.spec.model, t)?;
                Self::with_model(self.spec.clone(), model)
            }
        }
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// Current (possibly drifted) Pauli part of the truth.
    pub fn model(&self) -> &PauliModel {
        &self.model
    }

    pub fn gate_ptm(&self, gate: &GateLabel) -> Result<&Ptm> {
        self.table.get(gate)
    }

    pub fn gate_table(&self) -> &GateTable {
        &self.table
    }

    pub fn prepared_state(&self) -> &PauliVector<f64> {
        &self.state
    }

    pub fn readout_inverse(&self) -> &Matrix<f64> {
        &self.readout_inverse
    }

    fn check_setting(&self, setting: &ExperimentalSetting) -> Result<()> {
        if setting.shots == 0 {
            return Err(PecError::InvalidArgument("shots must be >= 1".into()));
        }
        Ok(())
    }

    pub fn final_state(&self, setting: &ExperimentalSetting) -> Result<PauliVector<f64>> {
        let mut state = self.state.clone();
        for g in setting.full_sequence(self.n())? {
            state = self.table.get(&g)?.apply(&state)?;
        }
        Ok(state)
    }

    /// Ideal-measurement outcome probabilities of a state.
    pub fn outcome_probabilities(&self, state: &PauliVector<f64>) -> Result<Vec<f64>> {
        self.projectors.iter().map(|e| e.eval(state)).collect()
    }

    /// Observed-outcome distribution after readout confusion, validated and clamped.
    pub fn observed_distribution(&self, state: &PauliVector<f64>) -> Result<Vec<f64>> {
        let p = self.spec.readout.mul_vec(&self.outcome_probabilities(state)?)?;
        if let Some(bad) = p
            .iter()
            .find(|&&x| !(-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&x))
        {
            return Err(PecError::InternalConsistency(format!(
                "outcome probability {bad} outside [0, 1]"
            )));
        }
        let clamped: Vec<f64> = p.iter().map(|x| x.clamp(0.0, 1.0)).collect();
        let total: f64 = clamped.iter().sum();
        Ok(clamped.into_iter().map(|x| x / total).collect())
    }

    /// Shot-free probability of the all-zeros outcome.
    pub fn exact_setting_probability(&self, setting: &ExperimentalSetting) -> Result<f64> {
        self.check_setting(setting)?;
        Ok(self.observed_distribution(&self.final_state(setting)?)?[0])
    }

    /// Executes `setting` on its own random stream.
    pub fn run_setting(&self, setting: &ExperimentalSetting, stream: u64) -> Result<ShotRecord> {
        let mut rng = stream_rng(self.spec.seed, stream);
        self.run_setting_with(setting, &mut rng)
    }

    pub fn run_setting_with<R: Rng + ?Sized>(
        &self,
        setting: &ExperimentalSetting,
        rng: &mut R,
    ) -> Result<ShotRecord> {
        self.check_setting(setting)?;
        let probs = self.observed_distribution(&self.final_state(setting)?)?;
        Ok(ShotRecord {
            setting: setting.clone(),
            counts: sample_counts(&probs, setting.shots, rng),
        })
    }

    /// Readout-corrected outcome frequencies `C^{-1} (counts / shots)`.
    pub fn corrected_frequencies(&self, counts: &[u64]) -> Result<Vec<f64>> {
        correct_counts(&self.readout_inverse, counts)
    }
}

pub fn correct_counts(readout_inverse: &Matrix<f64>, counts: &[u64]) -> Result<Vec<f64>> {
    let shots: u64 = counts.iter().sum();
    if shots == 0 {
        return Err(PecError::IncompleteData("record has no shots".into()));
    }
    let f: Vec<f64> = counts.iter().map(|&c| c as f64 / shots as f64).collect();
    readout_inverse.mul_vec(&f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliChannel;
    use crate::rng::stream_rng;

    fn one(g: Gate1) -> GateLabel {
        GateLabel::One(g)
    }

    fn noisy_x_half() -> Device {
        let mut spec = DeviceSpec::noiseless(1);
        spec.model.qubits[0]
            .gates
            .insert(Gate1::XHalfPi, PauliChannel::new(1, vec![0.97, 0.01, 0.01, 0.01]).unwrap());
        Device::new(spec).unwrap()
    }

    #[test]
    fn noiseless_identity_and_flip() {
        let dev = Device::new(DeviceSpec::noiseless(1)).unwrap();
        let keep = ExperimentalSetting::new(0, vec![], None, 500);
        let flip = ExperimentalSetting::new(0, vec![one(Gate1::XPi)], None, 500);
        assert_eq!(dev.run_setting(&keep, 1).unwrap().zeros_count(), 500);
        assert_eq!(dev.run_setting(&flip, 1).unwrap().zeros_count(), 0);
        assert_eq!(dev.exact_setting_probability(&keep).unwrap(), 1.0);
    }

    #[test]
    fn two_noisy_half_turns() {
        let dev = noisy_x_half();
        let s = ExperimentalSetting::new(0, vec![one(Gate1::XHalfPi); 2], None, 1_000_000);
        // Oracle: X_pi/2 maps Z -> -Y; the channel keeps Y and Z at 0.96 each.
        // Two of them send Z -> -0.96^2 Z, so P(0) = (1 - 0.9216) / 2.
        let exact = dev.exact_setting_probability(&s).unwrap();
        assert!((exact - 0.0392).abs() < 1e-15);
        let k = dev.run_setting(&s, 9).unwrap().zeros_count() as f64;
        let sigma = (exact * (1.0 - exact) * 1e6).sqrt();
        assert!((k - exact * 1e6).abs() < 3.0 * sigma);
    }

    #[test]
    fn single_gate_survival() {
        let mut spec = DeviceSpec::noiseless(1);
        spec.model.qubits[0]
            .gates
            .insert(Gate1::I, PauliChannel::new(1, vec![0.97, 0.01, 0.01, 0.01]).unwrap());
        let dev = Device::new(spec).unwrap();
        let s = ExperimentalSetting::new(0, vec![], None, 10);
        // The I fiducial is the only gate.
        assert!((dev.exact_setting_probability(&s).unwrap() - 0.98).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_reproducible_and_consistent() {
        let dev = noisy_x_half();
        let s = ExperimentalSetting::new(2, vec![one(Gate1::XHalfPi)], Some(1), 1000);
        let p = dev.exact_setting_probability(&s).unwrap();
        let a = dev.run_setting(&s, 42).unwrap();
        assert_eq!(a, dev.run_setting(&s, 42).unwrap());
        let freqs: Vec<f64> = (0..200)
            .map(|r| dev.run_setting(&s, r).unwrap().zeros_count() as f64 / 1000.0)
            .collect();
        let mean = crate::stats::mean(&freqs);
        let se = (p * (1.0 - p) / (1000.0 * 200.0)).sqrt();
        assert!((mean - p).abs() < 5.0 * se, "{mean} vs {p}");
    }

    #[test]
    fn zero_shots_rejected_and_unconfigured_gate_rejected() {
        let dev = Device::new(DeviceSpec::noiseless(1)).unwrap();
        assert!(dev.run_setting(&ExperimentalSetting::new(0, vec![], None, 0), 0).is_err());
        let mut spec = DeviceSpec::noiseless(1);
        spec.model.qubits[0].gates.remove(&Gate1::YPi);
        let dev = Device::new(spec).unwrap();
        let s = ExperimentalSetting::new(0, vec![one(Gate1::YPi)], None, 1);
        assert!(matches!(dev.run_setting(&s, 0), Err(PecError::UnconfiguredGate(_))));
    }

    #[test]
    fn noiseless_device_gives_the_ideal_gram_matrix() {
        for n in 1..=2 {
            let dev = Device::new(DeviceSpec::noiseless(n)).unwrap();
            let ideal = PauliModel::noiseless(n);
            let inits = if n == 1 { 4 } else { 16 };
            let meas = if n == 1 { 3 } else { 9 };
            for i in 0..inits {
                for k in 0..meas {
                    let s = ExperimentalSetting::new(i, vec![], Some(k), 1);
                    let mut rho = ideal.fiducial_state(i).unwrap();
                    rho = ideal_ptm(&GateLabel::measurement_fiducial(n, k).unwrap()).apply(&rho).unwrap();
                    let want = ObservableVector::zero_projector(n).eval(&rho).unwrap();
                    let got = dev.exact_setting_probability(&s).unwrap();
                    assert!((got - want).abs() < 1e-15);
                    assert!([0.0, 0.25, 0.5, 1.0].iter().any(|v| (want - v).abs() < 1e-15));
                }
            }
        }
    }

    #[test]
    fn crosstalk_limits() {
        let spec = DeviceSpec::noiseless(2);
        let x = GateLabel::One(Gate1::XHalfPi);
        let r0 = crosstalk_gate_ptm(&spec, &x, 0).unwrap();
        let want = tensor(&ideal_ptm(&x), &one_qubit_identity()).unwrap();
        assert!(r0.max_abs_diff(&want).unwrap() < 1e-15);
        let r1 = crosstalk_gate_ptm(&spec.clone().with_crosstalk(1.0), &x, 1).unwrap();
        let both = ideal_ptm(&GateLabel::Local(Gate1::XHalfPi, Gate1::XHalfPi));
        assert!(r1.max_abs_diff(&both).unwrap() < 1e-15);
        let r = crosstalk_gate_ptm(&spec.clone().with_crosstalk(0.05), &x, 0).unwrap();
        let neighbour = rotation_ptm(PauliLabel::new(&[crate::pauli::Axis::X]).unwrap(), std::f64::consts::PI / 40.0);
        let want = tensor(&ideal_ptm(&x), &neighbour).unwrap();
        assert!(r.max_abs_diff(&want).unwrap() < 1e-15);
        assert!(crosstalk_gate_ptm(&spec, &GateLabel::MsYy, 0).is_err());
    }

    #[test]
    fn readout_confusion_is_applied_and_inverted() {
        let mut spec = DeviceSpec::noiseless(1);
        spec.readout = Matrix::from_rows(&[vec![0.95, 0.1], vec![0.05, 0.9]]).unwrap();
        let dev = Device::new(spec).unwrap();
        let s = ExperimentalSetting::new(0, vec![], None, 200_000);
        assert!((dev.exact_setting_probability(&s).unwrap() - 0.95).abs() < 1e-15);
        let rec = dev.run_setting(&s, 3).unwrap();
        let f = dev.corrected_frequencies(&rec.counts).unwrap();
        assert!((f[0] - 1.0).abs() < 5.0 * (0.05f64 * 0.95 / 200_000.0).sqrt() / 0.85);
    }

    #[test]
    fn multinomial_counts_sum_to_shots() {
        let mut rng = stream_rng(1, 2);
        let c = sample_counts(&[0.1, 0.2, 0.3, 0.4], 1000, &mut rng);
        assert_eq!(c.iter().sum::<u64>(), 1000);
        assert_eq!(sample_counts(&[1.0, 0.0, 0.0, 0.0], 7, &mut rng), vec![7, 0, 0, 0]);
    }
}
