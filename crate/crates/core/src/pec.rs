//! Probabilistic error cancellation: signed sampling of compensated circuits,
//! the unbiased mitigated estimator, and an exhaustive-enumeration oracle.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::device::{parity_expectation, Device, ExperimentalSetting};
use crate::error::{PecError, Result};
use crate::pauli::{ideal_ptm, Axis, GateLabel, ObservableVector, PauliLabel, PauliTransferMatrix, PauliVector};
use crate::qpd::{DecompositionSet, QuasiDecomposition};
use crate::rng::{stream_rng, substream};
use crate::stats::Accumulator;

/// Circuits per mitigated estimate are cheap; shots per circuit default to this.
pub const DEFAULT_SHOTS_PER_CIRCUIT: u64 = 100;

/// Largest number of settings [`exact_mitigated`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

/// One draw from the quasi-probability ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledCircuit {
    /// Preparation fiducial index.
    pub init: usize,
    /// The target gates `a_0 .. a_{m-1}`.
    pub sequence: Vec<GateLabel>,
    /// Pauli basis index applied after each target gate.
    pub compensation: Vec<usize>,
    pub sign: i8,
    /// Signed product of the drawn coefficients.
    pub weight: f64,
}

impl SampledCircuit {
    /// The device circuit `[F_i, a_0, B_{b_0}, a_1, B_{b_1}, ...]`, read out in `Z`.
    pub fn setting(&self, n: usize, shots: u64) -> Result<ExperimentalSetting> {
        let mut gates = Vec::with_capacity(2 * self.sequence.len());
        for (g, &b) in self.sequence.iter().zip(&self.compensation) {
            gates.push(*g);
            gates.push(GateLabel::pauli_gate(n, b)?);
        }
        Ok(ExperimentalSetting::new(self.init, gates, None, shots))
    }
}

/// Sampling tables for one target sequence.
#[derive(Clone, Debug)]
pub struct CircuitSampler<'a> {
    sequence: Vec<GateLabel>,
    state: &'a QuasiDecomposition,
    gates: Vec<&'a QuasiDecomposition>,
    state_dist: WeightedIndex<f64>,
    gate_dists: Vec<WeightedIndex<f64>>,
    total_c: f64,
}

fn weighted(q: &QuasiDecomposition) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(q.probabilities())
        .map_err(|e| PecError::InvalidArgument(format!("cannot sample decomposition: {e}")))
}

impl<'a> CircuitSampler<'a> {
    pub fn new(sequence: &[GateLabel], decomps: &'a DecompositionSet) -> Result<Self> {
        let gates = sequence.iter().map(|g| decomps.get(g)).collect::<Result<Vec<_>>>()?;
        let gate_dists = gates.iter().map(|q| weighted(q)).collect::<Result<_>>()?;
        let total_c = decomps.state.one_norm * gates.iter().map(|q| q.one_norm).product::<f64>();
        Ok(Self {
            sequence: sequence.to_vec(),
            state: &decomps.state,
            gates,
            state_dist: weighted(&decomps.state)?,
            gate_dists,
            total_c,
        })
    }

    /// `C = C_state * Prod C_{a_l}`.
    pub fn total_c(&self) -> f64 {
        self.total_c
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledCircuit {
        let init = self.state_dist.sample(rng);
        let mut weight = self.state.coefficients[init];
        let compensation: Vec<usize> = self
            .gate_dists
            .iter()
            .zip(&self.gates)
            .map(|(d, q)| {
                let b = d.sample(rng);
                weight *= q.coefficients[b];
                b
            })
            .collect();
        SampledCircuit {
            init,
            sequence: self.sequence.clone(),
            compensation,
            sign: if weight < 0.0 { -1 } else { 1 },
            weight,
        }
    }
}

/// Draws `i` from `|q_state|/C_state` and each `b_l` from `|q_{a_l}|/C_{a_l}`.
pub fn sample_circuit<R: Rng + ?Sized>(
    sequence: &[GateLabel],
    decomps: &DecompositionSet,
    rng: &mut R,
) -> Result<SampledCircuit> {
    Ok(CircuitSampler::new(sequence, decomps)?.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MitigatedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_circuits: usize,
    pub shots_per_circuit: u64,
    pub total_c: f64,
}

/// A sampled circuit with the counts it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitRecord {
    pub circuit: SampledCircuit,
    pub counts: Vec<u64>,
}

impl CircuitRecord {
    /// `i a b sign zeros_count shots`; `a` and `b` are comma-separated
    /// gate-set and Pauli indices, and two-qubit records list all four counts.
    pub fn to_line(&self) -> String {
        let a: Vec<String> = self.circuit.sequence.iter().map(|g| g.dense_index().to_string()).collect();
        let b: Vec<String> = self.circuit.compensation.iter().map(|b| b.to_string()).collect();
        let dash = |v: Vec<String>| if v.is_empty() { "-".to_string() } else { v.join(",") };
        let counts: Vec<String> = self.counts.iter().map(|c| c.to_string()).collect();
        let shown = if self.counts.len() == 2 {
            counts[0].clone()
        } else {
            counts.join(" ")
        };
        format!(
            "{} {} {} {:+} {} {}",
            self.circuit.init,
            dash(a),
            dash(b),
            self.circuit.sign,
            shown,
            self.counts.iter().sum::<u64>()
        )
    }
}

/// Text form of an audit trail, one circuit per line.
pub fn audit_text(n: usize, records: &[CircuitRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# pec-lab pec circuit record");
    let _ = writeln!(out, "# n {n}");
    if n == 1 {
        let _ = writeln!(out, "# columns: i a b sign zeros_count shots");
    } else {
        let _ = writeln!(out, "# columns: i a b sign c00 c01 c10 c11 shots");
    }
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// `C * mean(sign * z)` over `n_circuits` circuits, each on its own substream.
pub fn estimate_mitigated(
    device: &Device,
    sequence: &[GateLabel],
    decomps: &DecompositionSet,
    n_circuits: usize,
    shots: u64,
    stream: u64,
) -> Result<MitigatedEstimate> {
    estimate_mitigated_with_audit(device, sequence, decomps, n_circuits, shots, stream, None)
}

/// [`estimate_mitigated`], optionally appending every circuit to `audit`.
pub fn estimate_mitigated_with_audit(
    device: &Device,
    sequence: &[GateLabel],
    decomps: &DecompositionSet,
    n_circuits: usize,
    shots: u64,
    stream: u64,
    mut audit: Option<&mut Vec<CircuitRecord>>,
) -> Result<MitigatedEstimate> {
    if n_circuits < 2 {
        return Err(PecError::InvalidArgument(
            "at least two circuits are needed for a variance estimate".into(),
        ));
    }
    if shots == 0 {
        return Err(PecError::InvalidArgument("shots must be >= 1".into()));
    }
    if decomps.n != device.n() {
        return Err(PecError::DimensionMismatch {
            expected: device.n(),
            found: decomps.n,
        });
    }
    let sampler = CircuitSampler::new(sequence, decomps)?;
    let n = device.n();
    let mut acc = Accumulator::new();
    let mut shot_var = Accumulator::new();
    for c in 0..n_circuits {
        let mut rng = stream_rng(device.spec().seed, substream(stream, &[c as u64]));
        let circuit = sampler.sample(&mut rng);
        let record = device.run_setting_with(&circuit.setting(n, shots)?, &mut rng)?;
        let z = parity_expectation(&device.corrected_frequencies(&record.counts)?);
        acc.push(f64::from(circuit.sign) * z);
        let smoothed = z * shots as f64 / (shots as f64 + 1.0);
        shot_var.push((1.0 - smoothed * smoothed).max(0.0) / shots as f64);
        if let Some(log) = audit.as_deref_mut() {
            log.push(CircuitRecord {
                circuit,
                counts: record.counts,
            });
        }
    }
    let c = sampler.total_c();
    // A zero sample spread (e.g. a noiseless device) still carries shot noise.
    let spread = acc.variance().max(shot_var.mean());
    Ok(MitigatedEstimate {
        value: (c * acc.mean()).clamp(-c, c),
        std_error: c * (spread / n_circuits as f64).sqrt(),
        n_circuits,
        shots_per_circuit: shots,
        total_c: c,
    })
}

fn parity_observable(n: usize) -> Result<ObservableVector<f64>> {
    let z = PauliLabel::new(&vec![Axis::Z; n])?;
    Ok(ObservableVector::pauli(z))
}

/// Noise-free `<Z...Z>` after `sequence` acting on `|0...0>`.
pub fn ideal_expectation(n: usize, sequence: &[GateLabel]) -> Result<f64> {
    let mut state = PauliVector::zero_state(n);
    for g in sequence {
        state = ideal_ptm::<f64>(g).apply(&state)?;
    }
    parity_observable(n)?.eval(&state)
}

fn matvec(m: &PauliTransferMatrix<f64>, v: &[f64], out: &mut [f64]) {
    let d = v.len();
    let data = m.matrix().as_slice();
    for (r, o) in out.iter_mut().enumerate() {
        *o = data[r * d..(r + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Number of settings in the full ensemble of `sequence`.
pub fn ensemble_size(n: usize, gates: usize) -> u128 {
    let dim = 1u128 << (2 * n);
    (0..=gates).fold(1u128, |acc, _| acc.saturating_mul(dim))
}

/// Exact `Sum_{i,b} q_{0,i} Prod q_{a_l,b_l} <Z...Z>` over every setting of the ensemble,
/// evaluated with the device's true (readout-free) outcome probabilities.
pub fn exact_mitigated(device: &Device, sequence: &[GateLabel], decomps: &DecompositionSet) -> Result<f64> {
    let n = device.n();
    if decomps.n != n {
        return Err(PecError::DimensionMismatch {
            expected: n,
            found: decomps.n,
        });
    }
    let settings = ensemble_size(n, sequence.len());
    if settings > ENUMERATION_LIMIT {
        return Err(PecError::EnumerationTooLarge {
            settings,
            limit: ENUMERATION_LIMIT,
        });
    }
    let dim = 1usize << (2 * n);
    let observable = parity_observable(n)?;
    let gates = sequence
        .iter()
        .map(|g| Ok((device.gate_ptm(g)?, decomps.get(g)?)))
        .collect::<Result<Vec<_>>>()?;
    let basis = (0..dim)
        .map(|j| device.gate_ptm(&GateLabel::pauli_gate(n, j)?))
        .collect::<Result<Vec<_>>>()?;

    let mut total = 0.0;
    let mut buffers = vec![vec![0.0; dim]; 2 * sequence.len() + 1];
    for (i, &qi) in decomps.state.coefficients.iter().enumerate() {
        let fid = device.gate_ptm(&GateLabel::prep_fiducial(n, i)?)?;
        matvec(fid, device.prepared_state().entries(), &mut buffers[0]);
        total += qi * descend(&gates, &basis, &observable, &mut buffers);
    }
    Ok(total)
}

/// Mean of the mitigated estimator in closed form,
/// `<Z...Z| Prod_l (Sum_b q_b B_b) A_l |Sum_i q_i F_i rho>`, for sequences too
/// long to enumerate.
pub fn expected_mitigated(device: &Device, sequence: &[GateLabel], decomps: &DecompositionSet) -> Result<f64> {
    let n = device.n();
    if decomps.n != n {
        return Err(PecError::DimensionMismatch {
            expected: n,
            found: decomps.n,
        });
    }
    let dim = 1usize << (2 * n);
    let mut state = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for (i, &q) in decomps.state.coefficients.iter().enumerate() {
        matvec(
            device.gate_ptm(&GateLabel::prep_fiducial(n, i)?)?,
            device.prepared_state().entries(),
            &mut scratch,
        );
        state.iter_mut().zip(&scratch).for_each(|(s, x)| *s += q * x);
    }
    let basis = (0..dim)
        .map(|j| device.gate_ptm(&GateLabel::pauli_gate(n, j)?))
        .collect::<Result<Vec<_>>>()?;
    let mut after_gate = vec![0.0; dim];
    for g in sequence {
        matvec(device.gate_ptm(g)?, &state, &mut after_gate);
        state.iter_mut().for_each(|s| *s = 0.0);
        for (b, &q) in decomps.get(g)?.coefficients.iter().enumerate() {
            matvec(basis[b], &after_gate, &mut scratch);
            state.iter_mut().zip(&scratch).for_each(|(s, x)| *s += q * x);
        }
    }
    Ok(state.iter().zip(parity_observable(n)?.entries()).map(|(a, b)| a * b).sum())
}

/// Weighted sum over every compensation choice from `gates[0]` on;
/// `buffers[0]` holds the state entering that gate.
fn descend(
    gates: &[(&PauliTransferMatrix<f64>, &QuasiDecomposition)],
    basis: &[&PauliTransferMatrix<f64>],
    observable: &ObservableVector<f64>,
    buffers: &mut [Vec<f64>],
) -> f64 {
    let Some((&(gate, q), later)) = gates.split_first() else {
        return buffers[0].iter().zip(observable.entries()).map(|(a, b)| a * b).sum();
    };
    let (input, rest) = buffers.split_first_mut().expect("buffer per level");
    let (after_gate, rest) = rest.split_first_mut().expect("buffer per level");
    matvec(gate, input, after_gate);
    let mut sum = 0.0;
    for (b, &qb) in q.coefficients.iter().enumerate() {
        matvec(basis[b], after_gate, &mut rest[0]);
        sum += qb * descend(later, basis, observable, rest);
    }
    sum
}
