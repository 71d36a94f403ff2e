//! Post-selected randomized benchmarking: sequence generation, raw and
//! mitigated runs, decay fits and the Pauli-assumption cross-check.

mod fit;

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;

pub use fit::{fit_decay, DecayFit, DecayModel, EXPONENT_CONVENTION};

use crate::device::{parity_expectation, Device, DeviceSpec, ExperimentalSetting, GateTable, PauliModel};
use crate::error::{PecError, Result};
use crate::pauli::{ideal_ptm, Gate1, GateLabel, PauliVector, COMPUTATIONAL_1Q, INTERLEAVED_1Q};
use crate::pec::{estimate_mitigated_with_audit, CircuitRecord};
use crate::qpd::DecompositionSet;
use crate::rng::{stream_rng, substream};
use crate::stats::Accumulator;

pub const RESULT_SCHEMA_VERSION: u32 = 1;
/// Two-qubit runs keep this many sequences per length by default.
pub const DEFAULT_TWO_QUBIT_COUNT: usize = 4;
/// Candidates rejected by post-selection before giving up.
pub const MAX_REJECTIONS: u64 = 1_000_000;
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 200;

/// `L` computational gates interleaved with `L + 1` twirling gates.
#[derive(Clone, Debug, PartialEq)]
pub struct RbSequence {
    pub n: usize,
    pub computational: Vec<GateLabel>,
    pub interleaved: Vec<GateLabel>,
    /// Ideal `<Z>` (or `<Z⊗Z>`) at the end, `±1`.
    pub ideal_outcome: f64,
}

impl RbSequence {
    pub fn length(&self) -> usize {
        self.computational.len()
    }

    /// `[g_0, c_1, g_1, ..., c_L, g_L]`.
    pub fn gates(&self) -> Vec<GateLabel> {
        let mut out = Vec::with_capacity(2 * self.length() + 1);
        out.push(self.interleaved[0]);
        for (c, g) in self.computational.iter().zip(&self.interleaved[1..]) {
            out.push(*c);
            out.push(*g);
        }
        out
    }
}

pub fn computational_gates(n: usize) -> Vec<GateLabel> {
    match n {
        1 => COMPUTATIONAL_1Q.into_iter().map(GateLabel::One).collect(),
        _ => vec![GateLabel::MsYy, GateLabel::MsZz],
    }
}

fn draw_interleaved<R: Rng + ?Sized>(n: usize, rng: &mut R) -> GateLabel {
    match n {
        1 => GateLabel::One(*INTERLEAVED_1Q.choose(rng).expect("non-empty")),
        _ => GateLabel::Local(
            *Gate1::ALL.choose(rng).expect("non-empty"),
            *Gate1::ALL.choose(rng).expect("non-empty"),
        ),
    }
}

fn ideal_table(n: usize) -> Result<GateTable> {
    GateTable::build(n, |g| Ok(ideal_ptm(g)))
}

/// Ideal final `<Z...Z>` of a gate list, or `None` unless it is `±1`.
fn deterministic_outcome(table: &GateTable, n: usize, gates: &[GateLabel]) -> Result<Option<f64>> {
    let mut state = PauliVector::zero_state(n);
    for g in gates {
        state = table.get(g)?.apply(&state)?;
    }
    let z = state.entries()[state.entries().len() - 1] * ((1usize << n) as f64).sqrt();
    Ok(((z.abs() - 1.0).abs() < 1e-9).then(|| z.signum()))
}

/// Draws uniform candidates and keeps the first `count` whose ideal final
/// state is a `Z` (or `Z⊗Z`) eigenstate.
pub fn generate_sequences<R: Rng + ?Sized>(
    n: usize,
    length: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<RbSequence>> {
    if !(1..=2).contains(&n) {
        return Err(PecError::InvalidArgument(format!("{n} qubits are not supported")));
    }
    if length == 0 {
        return Err(PecError::InvalidArgument("sequence length must be >= 1".into()));
    }
    let table = ideal_table(n)?;
    let comp = computational_gates(n);
    let mut out = Vec::with_capacity(count);
    let mut rejections = 0u64;
    while out.len() < count {
        let computational: Vec<GateLabel> = (0..length).map(|_| *comp.choose(rng).expect("non-empty")).collect();
        let interleaved: Vec<GateLabel> = (0..=length).map(|_| draw_interleaved(n, rng)).collect();
        let mut seq = RbSequence {
            n,
            computational,
            interleaved,
            ideal_outcome: 0.0,
        };
        match deterministic_outcome(&table, n, &seq.gates())? {
            Some(z) => {
                seq.ideal_outcome = z;
                out.push(seq);
            }
            None => {
                rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(PecError::PostSelectionExhausted { rejections });
                }
            }
        }
    }
    Ok(out)
}

/// The sequences of one benchmark, fixed so several runs can share them.
#[derive(Clone, Debug, PartialEq)]
pub struct RbPlan {
    pub n: usize,
    pub lengths: Vec<usize>,
    /// `sequences[i]` belongs to `lengths[i]`.
    pub sequences: Vec<Vec<RbSequence>>,
}

impl RbPlan {
    /// Each length draws from its own substream of `stream`.
    pub fn generate(n: usize, lengths: &[usize], count: usize, seed: u64, stream: u64) -> Result<Self> {
        if count == 0 {
            return Err(PecError::InvalidArgument("need at least one sequence per length".into()));
        }
        let sequences = lengths
            .iter()
            .map(|&l| {
                let mut rng = stream_rng(seed, substream(stream, &[l as u64]));
                generate_sequences(n, l, count, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n,
            lengths: lengths.to_vec(),
            sequences,
        })
    }

    pub fn total_sequences(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RbKind {
    Raw,
    Mitigated,
    /// Shot-free forward simulation of a model.
    Simulated,
}

impl RbKind {
    pub fn name(self) -> &'static str {
        match self {
            RbKind::Raw => "raw",
            RbKind::Mitigated => "mitigated",
            RbKind::Simulated => "simulated",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [RbKind::Raw, RbKind::Mitigated, RbKind::Simulated]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// How survival is measured on the device.
#[derive(Clone, Copy, Debug)]
pub enum RbMode<'a> {
    Raw,
    Mitigated {
        decomps: &'a DecompositionSet,
        circuits: usize,
    },
}

/// Survival of one sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceOutcome {
    pub length: usize,
    pub index: usize,
    pub fidelity: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbPoint {
    pub length: usize,
    pub mean: f64,
    pub std_error: f64,
    pub n_sequences: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbResult {
    pub n: usize,
    pub kind: RbKind,
    /// Per-sequence survivals (not serialized).
    pub outcomes: Vec<SequenceOutcome>,
    pub points: Vec<RbPoint>,
    pub fit: Option<DecayFit>,
}

/// Mean survival per length; the error is the larger of the between-sequence
/// spread and the propagated per-sequence errors.
pub fn aggregate(outcomes: &[SequenceOutcome]) -> Vec<RbPoint> {
    let mut lengths: Vec<usize> = outcomes.iter().map(|o| o.length).collect();
    lengths.sort_unstable();
    lengths.dedup();
    lengths
        .into_iter()
        .map(|l| {
            let group: Vec<&SequenceOutcome> = outcomes.iter().filter(|o| o.length == l).collect();
            let k = group.len() as f64;
            let acc: Accumulator = group.iter().map(|o| o.fidelity).collect();
            let within = group.iter().map(|o| o.std_error * o.std_error).sum::<f64>().sqrt() / k;
            let between = if group.len() > 1 { acc.std_error() } else { 0.0 };
            RbPoint {
                length: l,
                mean: acc.mean(),
                std_error: between.max(within),
                n_sequences: group.len(),
            }
        })
        .collect()
}

impl RbResult {
    fn from_outcomes(n: usize, kind: RbKind, outcomes: Vec<SequenceOutcome>, model: DecayModel) -> Result<Self> {
        let points = aggregate(&outcomes);
        let distinct = points.len();
        let fit = if distinct >= 3 { Some(fit_decay(n, &points, model)?) } else { None };
        Ok(Self {
            n,
            kind,
            outcomes,
            points,
            fit,
        })
    }

    /// Columnar `L mean stderr n_sequences` plus a `# fit` block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# pec-lab rb result");
        let _ = writeln!(out, "# schema_version {RESULT_SCHEMA_VERSION}");
        let _ = writeln!(out, "# n {}", self.n);
        let _ = writeln!(out, "# kind {}", self.kind.name());
        let _ = writeln!(out, "# columns: L mean stderr n_sequences");
        for p in &self.points {
            let _ = writeln!(out, "{} {:?} {:?} {}", p.length, p.mean, p.std_error, p.n_sequences);
        }
        if let Some(f) = &self.fit {
            let _ = writeln!(out, "# fit model A*p^L+B");
            let _ = writeln!(out, "# fit exponent {EXPONENT_CONVENTION}");
            match f.model {
                DecayModel::FixedOffset(b) => {
                    let _ = writeln!(out, "# fit offset fixed {b:?}");
                }
                DecayModel::FreeOffset => {
                    let _ = writeln!(out, "# fit offset free");
                }
            }
            let _ = writeln!(out, "# fit A {:?} {:?}", f.a, f.a_se());
            let _ = writeln!(out, "# fit p {:?} {:?}", f.p, f.p_se());
            let _ = writeln!(out, "# fit B {:?} {:?}", f.b, f.b_se());
            for (r, row) in f.covariance.iter().enumerate() {
                let _ = writeln!(out, "# fit covariance {r} {:?} {:?} {:?}", row[0], row[1], row[2]);
            }
            let _ = writeln!(out, "# fit chi2 {:?} {}", f.chi2, f.dof);
            let _ = writeln!(out, "# fit decay_rate {:?} {:?}", f.decay_rate(), f.p_se());
            let _ = writeln!(out, "# fit error_rate {:?} {:?}", f.error_rate(), f.error_rate_se());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut kind = None;
        let mut points = Vec::new();
        let mut fit_fields: Vec<(String, Vec<String>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let err = |message: String| PecError::Parse {
                line: lineno + 1,
                message,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let parts: Vec<&str> = comment.split_whitespace().collect();
                match parts.as_slice() {
                    ["schema_version", v] => {
                        if v.parse::<u32>().ok() != Some(RESULT_SCHEMA_VERSION) {
                            return Err(err(format!("unsupported schema_version {v}")));
                        }
                    }
                    ["n", v] => n = Some(v.parse::<usize>().map_err(|e| err(e.to_string()))?),
                    ["kind", v] => kind = Some(RbKind::parse(v).ok_or_else(|| err(format!("unknown kind {v}")))?),
                    ["fit", key, rest @ ..] => {
                        fit_fields.push((key.to_string(), rest.iter().map(|s| s.to_string()).collect()))
                    }
                    _ => {}
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            points.push(RbPoint {
                length: fields[0].parse().map_err(|e| err(format!("`{}`: {e}", fields[0])))?,
                mean: num(fields[1])?,
                std_error: num(fields[2])?,
                n_sequences: fields[3].parse().map_err(|e| err(format!("`{}`: {e}", fields[3])))?,
            });
        }
        let missing = |what: &str| PecError::Parse {
            line: 0,
            message: format!("missing `# {what}` header"),
        };
        let n = n.ok_or_else(|| missing("n"))?;
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let fit = if fit_fields.is_empty() {
            None
        } else {
            Some(parse_fit(n, &fit_fields)?)
        };
        Ok(Self {
            n,
            kind,
            outcomes: Vec::new(),
            points,
            fit,
        })
    }
}

fn parse_fit(n: usize, fields: &[(String, Vec<String>)]) -> Result<DecayFit> {
    let bad = |what: &str| PecError::Parse {
        line: 0,
        message: format!("bad fit field `{what}`"),
    };
    let get = |key: &str| -> Result<&Vec<String>> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| bad(key))
    };
    let num = |key: &str, idx: usize| -> Result<f64> {
        get(key)?
            .get(idx)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(key))
    };
    let offset = get("offset")?;
    let model = match offset.first().map(String::as_str) {
        Some("free") => DecayModel::FreeOffset,
        Some("fixed") => DecayModel::FixedOffset(num("offset", 1)?),
        _ => return Err(bad("offset")),
    };
    let mut covariance = [[0.0; 3]; 3];
    for (_, values) in fields.iter().filter(|(k, _)| k == "covariance") {
        let r: usize = values.first().and_then(|s| s.parse().ok()).filter(|r| *r < 3).ok_or_else(|| bad("covariance"))?;
        for c in 0..3 {
            covariance[r][c] = values.get(c + 1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("covariance"))?;
        }
    }
    Ok(DecayFit {
        model,
        n,
        a: num("A", 0)?,
        p: num("p", 0)?,
        b: num("B", 0)?,
        covariance,
        chi2: num("chi2", 0)?,
        dof: num("chi2", 1)? as usize,
    })
}

fn run_time(k: usize, total: usize) -> f64 {
    if total > 1 {
        k as f64 / (total - 1) as f64
    } else {
        0.0
    }
}

/// Runs every sequence of `plan` on `device`. With drift configured the
/// device is advanced through the run in sequence order.
pub fn run_rb(
    device: &Device,
    plan: &RbPlan,
    shots: u64,
    mode: RbMode<'_>,
    model: DecayModel,
    stream: u64,
) -> Result<RbResult> {
    run_rb_audited(device, plan, shots, mode, model, stream, None)
}

/// Sampled circuits of one mitigated sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceAudit {
    pub length: usize,
    pub index: usize,
    pub records: Vec<CircuitRecord>,
}

/// [`run_rb`] that also keeps every sampled circuit of a mitigated run.
pub fn run_rb_audited(
    device: &Device,
    plan: &RbPlan,
    shots: u64,
    mode: RbMode<'_>,
    model: DecayModel,
    stream: u64,
    mut audit: Option<&mut Vec<SequenceAudit>>,
) -> Result<RbResult> {
    if plan.n != device.n() {
        return Err(PecError::DimensionMismatch {
            expected: device.n(),
            found: plan.n,
        });
    }
    if shots == 0 {
        return Err(PecError::InvalidArgument("shots must be >= 1".into()));
    }
    let total = plan.total_sequences();
    let drifting = device.spec().drift.is_some();
    let mut outcomes = Vec::with_capacity(total);
    let mut k = 0;
    for (&length, seqs) in plan.lengths.iter().zip(&plan.sequences) {
        for (index, seq) in seqs.iter().enumerate() {
            let now;
            let dev = if drifting {
                now = device.at_time(run_time(k, total))?;
                &now
            } else {
                device
            };
            k += 1;
            let sub = substream(stream, &[length as u64, index as u64]);
            let (fidelity, std_error) = match mode {
                RbMode::Raw => {
                    let setting = ExperimentalSetting::new(0, seq.gates(), None, shots);
                    let mut rng = stream_rng(dev.spec().seed, sub);
                    let rec = dev.run_setting_with(&setting, &mut rng)?;
                    let z = parity_expectation(&dev.corrected_frequencies(&rec.counts)?);
                    let f = ((1.0 + seq.ideal_outcome * z) / 2.0).clamp(0.0, 1.0);
                    let smoothed = (f * shots as f64 + 0.5) / (shots as f64 + 1.0);
                    (f, (smoothed * (1.0 - smoothed) / shots as f64).sqrt())
                }
                RbMode::Mitigated { decomps, circuits } => {
                    let mut records = audit.as_ref().map(|_| Vec::with_capacity(circuits));
                    let est = estimate_mitigated_with_audit(dev, &seq.gates(), decomps, circuits, shots, sub, records.as_mut())?;
                    if let (Some(sink), Some(records)) = (audit.as_deref_mut(), records) {
                        sink.push(SequenceAudit { length, index, records });
                    }
                    ((1.0 + seq.ideal_outcome * est.value) / 2.0, est.std_error / 2.0)
                }
            };
            outcomes.push(SequenceOutcome {
                length,
                index,
                fidelity,
                std_error,
            });
        }
    }
    let kind = match mode {
        RbMode::Raw => RbKind::Raw,
        RbMode::Mitigated { .. } => RbKind::Mitigated,
    };
    RbResult::from_outcomes(device.n(), kind, outcomes, model)
}

/// Shot-free survival of every sequence under `model` (ideal readout, no crosstalk).
pub fn simulate_rb(model: &PauliModel, plan: &RbPlan, decay: DecayModel) -> Result<RbResult> {
    let device = Device::new(DeviceSpec::from_model("characterized", model.clone()))?;
    let mut outcomes = Vec::with_capacity(plan.total_sequences());
    for (&length, seqs) in plan.lengths.iter().zip(&plan.sequences) {
        for (index, seq) in seqs.iter().enumerate() {
            let state = device.final_state(&ExperimentalSetting::new(0, seq.gates(), None, 1))?;
            let z = parity_expectation(&device.outcome_probabilities(&state)?);
            outcomes.push(SequenceOutcome {
                length,
                index,
                fidelity: (1.0 + seq.ideal_outcome * z) / 2.0,
                std_error: 0.0,
            });
        }
    }
    RbResult::from_outcomes(plan.n, RbKind::Simulated, outcomes, decay)
}

/// Sampled-versus-simulated comparison on shared sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub experimental: RbResult,
    pub simulated: RbResult,
    /// Experimental minus simulated error rate.
    pub difference: f64,
    /// Paired-bootstrap standard error of `difference`.
    pub difference_se: f64,
    pub bootstrap_samples: usize,
}

impl ValidationReport {
    pub fn to_text(&self) -> String {
        let rate = |r: &RbResult| r.fit.as_ref().map_or((f64::NAN, f64::NAN), |f| (f.error_rate(), f.error_rate_se()));
        let (e, e_se) = rate(&self.experimental);
        let (s, s_se) = rate(&self.simulated);
        let mut out = String::new();
        let _ = writeln!(out, "# pec-lab pauli validation");
        let _ = writeln!(out, "# schema_version {RESULT_SCHEMA_VERSION}");
        let _ = writeln!(out, "# n {}", self.experimental.n);
        let _ = writeln!(out, "# columns: L experimental experimental_stderr simulated");
        for (a, b) in self.experimental.points.iter().zip(&self.simulated.points) {
            let _ = writeln!(out, "{} {:?} {:?} {:?}", a.length, a.mean, a.std_error, b.mean);
        }
        let _ = writeln!(out, "# experimental_error_rate {e:?} {e_se:?}");
        let _ = writeln!(out, "# simulated_error_rate {s:?} {s_se:?}");
        let _ = writeln!(out, "# difference {:?} {:?}", self.difference, self.difference_se);
        let _ = writeln!(out, "# bootstrap_samples {}", self.bootstrap_samples);
        out
    }
}

fn error_rate(r: &RbResult) -> Result<f64> {
    r.fit
        .as_ref()
        .map(DecayFit::error_rate)
        .ok_or_else(|| PecError::InvalidArgument("validation needs at least 3 lengths".into()))
}

/// Runs `plan` on the sampled device and simulates it exactly with the
/// characterized model; the difference's error comes from resampling
/// sequences (the same draw for both sides) and refitting.
pub fn validate_pauli_assumption(
    device: &Device,
    characterized: &PauliModel,
    plan: &RbPlan,
    shots: u64,
    decay: DecayModel,
    bootstrap: usize,
    stream: u64,
) -> Result<ValidationReport> {
    if plan.sequences.iter().any(|s| s.len() < 2) || bootstrap < 2 {
        return Err(PecError::InvalidArgument(
            "validation needs at least 2 sequences per length and 2 bootstrap samples".into(),
        ));
    }
    let experimental = run_rb(device, plan, shots, RbMode::Raw, decay, substream(stream, &[0]))?;
    let simulated = simulate_rb(characterized, plan, decay)?;
    let difference = error_rate(&experimental)? - error_rate(&simulated)?;

    let mut rng = stream_rng(device.spec().seed, substream(stream, &[1]));
    let mut diffs = Accumulator::new();
    for _ in 0..bootstrap {
        let mut exp = Vec::new();
        let mut sim = Vec::new();
        for &length in &plan.lengths {
            let e: Vec<&SequenceOutcome> = experimental.outcomes.iter().filter(|o| o.length == length).collect();
            let s: Vec<&SequenceOutcome> = simulated.outcomes.iter().filter(|o| o.length == length).collect();
            for _ in 0..e.len() {
                let j = rng.random_range(0..e.len());
                exp.push(*e[j]);
                sim.push(*s[j]);
            }
        }
        let fe = fit_decay(plan.n, &aggregate(&exp), decay);
        let fs = fit_decay(plan.n, &aggregate(&sim), decay);
        if let (Ok(fe), Ok(fs)) = (fe, fs) {
            diffs.push(fe.error_rate() - fs.error_rate());
        }
    }
    if diffs.count() < 2 {
        return Err(PecError::FitFailed { residual: f64::NAN });
    }
    Ok(ValidationReport {
        experimental,
        simulated,
        difference,
        difference_se: diffs.std_dev(),
        bootstrap_samples: diffs.count() as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliChannel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn depolarized(n: usize, e: f64) -> Device {
        let ch = PauliChannel::depolarizing(1, e).unwrap();
        let mut model = PauliModel::noiseless(n);
        for q in &mut model.qubits {
            *q = crate::device::QubitModel::uniform(ch.clone());
        }
        Device::new(DeviceSpec::from_model("depolarized", model)).unwrap()
    }

    #[test]
    fn emitted_sequences_are_eigenstates() {
        for n in 1..=2 {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let lengths: &[usize] = if n == 1 { &[2, 4, 6] } else { &[1, 2, 5] };
            for &l in lengths {
                let seqs = generate_sequences(n, l, 6, &mut rng).unwrap();
                assert_eq!(seqs.len(), 6);
                for s in seqs {
                    assert_eq!(s.gates().len(), 2 * l + 1);
                    let z = crate::pec::ideal_expectation(n, &s.gates()).unwrap();
                    assert!((z - s.ideal_outcome).abs() < 1e-9);
                    assert!((z.abs() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn length_two_cross_check() {
        let table = ideal_table(1).unwrap();
        let mut accepted = std::collections::BTreeSet::new();
        let comp = computational_gates(1);
        let inter: Vec<GateLabel> = INTERLEAVED_1Q.into_iter().map(GateLabel::One).collect();
        let mut total = 0;
        for c1 in &comp {
            for c2 in &comp {
                for g0 in &inter {
                    for g1 in &inter {
                        for g2 in &inter {
                            total += 1;
                            let gates = vec![*g0, *c1, *g1, *c2, *g2];
                            if deterministic_outcome(&table, 1, &gates).unwrap().is_some() {
                                accepted.insert(gates);
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(total, 16 * 343);
        assert!(!accepted.is_empty() && accepted.len() < total);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for s in generate_sequences(1, 2, 200, &mut rng).unwrap() {
            assert!(accepted.contains(&s.gates()));
        }
    }

    #[test]
    fn single_qubit_length_one_never_post_selects() {
        // One π/2 pulse always leaves |0> on the equator.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            generate_sequences(1, 1, 1, &mut rng),
            Err(PecError::PostSelectionExhausted { .. })
        ));
    }

    #[test]
    fn noiseless_raw_rb_is_flat() {
        let dev = Device::new(DeviceSpec::noiseless(1)).unwrap();
        let plan = RbPlan::generate(1, &[2, 4, 6, 8], 3, 1, 5).unwrap();
        let res = run_rb(&dev, &plan, 200, RbMode::Raw, DecayModel::default(), 9).unwrap();
        assert!(res.points.iter().all(|p| p.mean == 1.0));
        let fit = res.fit.unwrap();
        assert!(fit.error_rate().abs() < 1e-9);
    }

    #[test]
    fn depolarizing_survival_matches_closed_form() {
        // Each step applies two gates with eigenvalue lam, plus the I fiducial.
        let e = 0.003;
        let lam = 1.0 - 4.0 * e / 3.0;
        let dev = depolarized(1, e);
        let plan = RbPlan::generate(1, &[2, 4, 6, 8], 5, 2, 5).unwrap();
        let sim = simulate_rb(dev.model(), &plan, DecayModel::default()).unwrap();
        for o in &sim.outcomes {
            let expected = 0.5 + 0.5 * lam.powi(2 * o.length as i32 + 2);
            assert!((o.fidelity - expected).abs() < 1e-12);
        }
        let fit = sim.fit.unwrap();
        assert!((fit.p - lam * lam).abs() < 1e-9);
        assert!((fit.a - 0.5 * lam * lam).abs() < 1e-9);
    }

    #[test]
    fn sampled_depolarizing_rate_within_three_sigma() {
        let e = 0.002;
        let lam: f64 = 1.0 - 4.0 * e / 3.0;
        let expected = (1.0 - lam * lam) / 2.0;
        let dev = depolarized(1, e);
        let plan = RbPlan::generate(1, &[2, 4, 8, 16, 32], 10, 4, 1).unwrap();
        let fit = run_rb(&dev, &plan, 2000, RbMode::Raw, DecayModel::default(), 2)
            .unwrap()
            .fit
            .unwrap();
        assert!((fit.error_rate() - expected).abs() < 3.0 * fit.error_rate_se(), "{fit:?}");
    }

    #[test]
    fn result_text_round_trip() {
        let dev = depolarized(1, 0.004);
        let plan = RbPlan::generate(1, &[2, 4, 6, 8], 3, 1, 5).unwrap();
        for model in [DecayModel::default(), DecayModel::FreeOffset] {
            let mut res = run_rb(&dev, &plan, 500, RbMode::Raw, model, 3).unwrap();
            let back = RbResult::from_text(&res.to_text()).unwrap();
            res.outcomes.clear();
            assert_eq!(back, res);
        }
    }

    #[test]
    fn pauli_device_validates() {
        let dev = depolarized(1, 0.003);
        let plan = RbPlan::generate(1, &[2, 4, 8, 16], 8, 7, 3).unwrap();
        let rep = validate_pauli_assumption(&dev, dev.model(), &plan, 1000, DecayModel::default(), 100, 4).unwrap();
        assert!(rep.difference_se > 0.0);
        assert!(rep.difference.abs() < 3.0 * rep.difference_se, "{rep:?}");
        assert!(rep.to_text().contains("# difference"));
    }
}
