//! Stage execution and artifact layout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pec_core::device::{
    calibrate_crosstalk_ratio, state_fidelity_sweep, Device, DeviceSpec, DriftTarget, PauliModel,
};
use pec_core::gst::{
    characterize, characterize_exact, design_ms, design_single_qubit, FitOptions, GstDataset, GstEstimate,
    GstOptions,
};
use pec_core::pauli::{Gate1, GateLabel, PauliLabel};
use pec_core::pec::audit_text;
use pec_core::qpd::DecompositionSet;
use pec_core::rb::{
    run_rb, run_rb_audited, validate_pauli_assumption, RbMode, RbPlan, RbResult, SequenceAudit,
};
use pec_core::rng::named_stream;

use crate::config::{PipelineConfig, QpdSource, Stage};
use crate::error::CliError;

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// File layout under the output directory.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    fn at(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn device(&self) -> PathBuf {
        self.at("device.txt")
    }
    pub fn gst_dataset(&self) -> PathBuf {
        self.at("gst/dataset.txt")
    }
    pub fn gst_estimate(&self) -> PathBuf {
        self.at("gst/estimate.json")
    }
    pub fn gst_rates(&self) -> PathBuf {
        self.at("gst/rates.txt")
    }
    pub fn gst_ms_rates(&self) -> PathBuf {
        self.at("gst/ms_rates.txt")
    }
    pub fn gst_gram(&self) -> PathBuf {
        self.at("gst/gram.txt")
    }
    pub fn gst_ptm_difference(&self) -> PathBuf {
        self.at("gst/ptm_difference.txt")
    }
    pub fn qpd_json(&self) -> PathBuf {
        self.at("qpd/decompositions.json")
    }
    pub fn qpd_table(&self) -> PathBuf {
        self.at("qpd/decompositions.txt")
    }
    pub fn rb_sequences(&self) -> PathBuf {
        self.at("rb/sequences.txt")
    }
    pub fn rb_raw(&self) -> PathBuf {
        self.at("rb/raw.txt")
    }
    pub fn rb_mitigated(&self) -> PathBuf {
        self.at("rb/mitigated.txt")
    }
    pub fn rb_paired(&self) -> PathBuf {
        self.at("rb/paired.txt")
    }
    pub fn rb_circuits(&self) -> PathBuf {
        self.at("rb/circuits.txt")
    }
    pub fn validation(&self) -> PathBuf {
        self.at("validate/validation.txt")
    }
    pub fn validation_experimental(&self) -> PathBuf {
        self.at("validate/experimental.txt")
    }
    pub fn validation_simulated(&self) -> PathBuf {
        self.at("validate/simulated.txt")
    }
    pub fn sweep(&self) -> PathBuf {
        self.at("sweep/crosstalk.txt")
    }
    pub fn report(&self) -> PathBuf {
        self.at("report.txt")
    }
    pub fn metadata(&self) -> PathBuf {
        self.at("run_metadata.json")
    }
}

fn write(stage: Stage, path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::stage(stage, format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::stage(stage, format!("cannot write {}: {e}", path.display())))
}

fn header(out: &mut String, title: &str, n: usize) {
    let _ = writeln!(out, "# pec-lab {title}");
    let _ = writeln!(out, "# schema_version {ARTIFACT_SCHEMA_VERSION}");
    let _ = writeln!(out, "# n {n}");
}

/// Structured summary of the simulated device.
pub fn device_text(spec: &DeviceSpec) -> String {
    let mut out = String::new();
    header(&mut out, "device", spec.n());
    let _ = writeln!(out, "name {}", spec.name);
    let _ = writeln!(out, "seed {}", spec.seed);
    let _ = writeln!(out, "crosstalk_ratio {:?}", spec.crosstalk_ratio);
    match &spec.drift {
        None => {
            let _ = writeln!(out, "drift none");
        }
        Some(d) => {
            let target = match d.target {
                DriftTarget::Single { qubit, gate } => format!("{qubit}:{gate}"),
                DriftTarget::MsYy => "MS_YY".to_string(),
            };
            let _ = writeln!(out, "drift {target} {} {:?}", d.pauli, d.slope);
        }
    }
    for (q, qm) in spec.model.qubits.iter().enumerate() {
        let _ = writeln!(out, "prep {q} {:?} {:?} {:?}", qm.prep[0], qm.prep[1], qm.prep[2]);
    }
    out
}

/// Orchestrates the stages of one configuration.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub artifacts: Artifacts,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let artifacts = Artifacts::new(config.output_dir.clone());
        Self { config, artifacts }
    }

    fn device(&self, stage: Stage, spec: DeviceSpec) -> Result<Device, CliError> {
        Device::new(spec).map_err(|e| CliError::stage(stage, e))
    }

    /// Runs `stages` in dependency order; upstream outputs must either be
    /// scheduled earlier or already exist on disk.
    pub fn run(&self, stages: &[Stage]) -> Result<(), CliError> {
        let mut stages = stages.to_vec();
        stages.sort();
        stages.dedup();
        for (i, stage) in stages.iter().enumerate() {
            self.check_upstream(*stage, &stages[..i])?;
        }
        if let Some(&first) = stages.first() {
            write(first, &self.artifacts.device(), &device_text(&self.config.device))?;
        }
        for stage in stages {
            match stage {
                Stage::Gst => self.stage_gst()?,
                Stage::Qpd => self.stage_qpd()?,
                Stage::RbRaw => self.stage_rb(false)?,
                Stage::RbMitigated => self.stage_rb(true)?,
                Stage::Validate => self.stage_validate()?,
                Stage::CrosstalkSweep => self.stage_sweep()?,
            }
        }
        Ok(())
    }

    fn check_upstream(&self, stage: Stage, earlier: &[Stage]) -> Result<(), CliError> {
        let need = |up: Stage, file: PathBuf, command: &str| {
            if earlier.contains(&up) || file.exists() {
                Ok(())
            } else {
                Err(CliError::stage(
                    stage,
                    format!(
                        "needs the output of stage `{up}` ({} not found); run `pec-lab {command}` first or add `--stage {up}`",
                        file.display()
                    ),
                ))
            }
        };
        match stage {
            Stage::Qpd if self.config.qpd_source == QpdSource::Gst => {
                need(Stage::Gst, self.artifacts.gst_estimate(), "characterize")
            }
            Stage::RbMitigated => need(Stage::Qpd, self.artifacts.qpd_json(), "decompose"),
            Stage::Validate => need(Stage::Gst, self.artifacts.gst_estimate(), "characterize"),
            _ => Ok(()),
        }
    }

    fn read(&self, stage: Stage, path: &Path) -> Result<String, CliError> {
        fs::read_to_string(path).map_err(|e| CliError::stage(stage, format!("cannot read {}: {e}", path.display())))
    }

    fn load_estimate(&self, stage: Stage) -> Result<GstEstimate, CliError> {
        let path = self.artifacts.gst_estimate();
        GstEstimate::from_json(&self.read(stage, &path)?)
            .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))
    }

    fn load_decompositions(&self, stage: Stage) -> Result<DecompositionSet, CliError> {
        let path = self.artifacts.qpd_json();
        DecompositionSet::from_json(&self.read(stage, &path)?)
            .map_err(|e| CliError::stage(stage, format!("{}: {e}", path.display())))
    }

    pub fn stage_gst(&self) -> Result<(), CliError> {
        let st = Stage::Gst;
        let cfg = &self.config.gst;
        let mut spec = self.config.device.clone();
        if !cfg.crosstalk {
            spec = spec.with_crosstalk(0.0);
        }
        let device = self.device(st, spec)?;
        let n = device.n();
        let estimate = if cfg.exact {
            characterize_exact(&device, FitOptions::default()).map_err(|e| CliError::stage(st, e))?
        } else {
            let mut settings = Vec::new();
            for q in 0..n {
                settings.extend(design_single_qubit(n, q, cfg.shots).map_err(|e| CliError::stage(st, e))?);
            }
            if n == 2 {
                settings.extend(design_ms(cfg.ms_shots).map_err(|e| CliError::stage(st, e))?);
            }
            let data = GstDataset::collect(&device, &settings, named_stream("gst")).map_err(|e| CliError::stage(st, e))?;
            write(st, &self.artifacts.gst_dataset(), &data.to_text())?;
            let options = GstOptions {
                fit: FitOptions::default(),
                variance: cfg.variance,
                ms_negative_tolerance: cfg.ms_negative_tolerance,
            };
            characterize(&data, options).map_err(|e| CliError::stage(st, e))?
        };
        write(st, &self.artifacts.gst_estimate(), &estimate.to_json().map_err(|e| CliError::stage(st, e))?)?;
        write(st, &self.artifacts.gst_rates(), &rates_text(&estimate.model))?;
        if let Some(ms) = &estimate.model.ms_yy {
            let mut out = String::new();
            header(&mut out, "gst ms_yy rates", 2);
            let _ = writeln!(out, "# columns: pauli rate");
            for (label, rate) in PauliLabel::all(2).zip(ms.rates()) {
                let _ = writeln!(out, "{label} {rate:?}");
            }
            write(st, &self.artifacts.gst_ms_rates(), &out)?;
        }
        write(st, &self.artifacts.gst_gram(), &gram_text(&estimate))?;
        write(
            st,
            &self.artifacts.gst_ptm_difference(),
            &ptm_difference_text(&estimate).map_err(|e| CliError::stage(st, e))?,
        )?;
        Ok(())
    }

    pub fn stage_qpd(&self) -> Result<(), CliError> {
        let st = Stage::Qpd;
        let model = match self.config.qpd_source {
            QpdSource::Gst => self.load_estimate(st)?.model,
            QpdSource::Truth => self.config.device.model.clone(),
        };
        let decomps = DecompositionSet::from_model(&model, None).map_err(|e| CliError::stage(st, e))?;
        write(st, &self.artifacts.qpd_json(), &decomps.to_json())?;
        write(st, &self.artifacts.qpd_table(), &decomposition_text(&decomps))?;
        Ok(())
    }

    fn rb_plan(&self, stage: Stage) -> Result<RbPlan, CliError> {
        let rb = &self.config.rb;
        RbPlan::generate(self.config.n(), &rb.lengths, rb.count, self.config.seed, named_stream("rb-plan"))
            .map_err(|e| CliError::stage(stage, e))
    }

    pub fn stage_rb(&self, mitigated: bool) -> Result<(), CliError> {
        let st = if mitigated { Stage::RbMitigated } else { Stage::RbRaw };
        let rb = &self.config.rb;
        let device = self.device(st, self.config.device.clone())?;
        let plan = self.rb_plan(st)?;
        write(st, &self.artifacts.rb_sequences(), &sequences_text(&plan))?;
        if !mitigated {
            let result = run_rb(&device, &plan, rb.shots, RbMode::Raw, rb.fit, named_stream("rb-raw"))
                .map_err(|e| CliError::stage(st, e))?;
            write(st, &self.artifacts.rb_raw(), &result.to_text())?;
            return Ok(());
        }
        let decomps = self.load_decompositions(st)?;
        let mode = RbMode::Mitigated {
            decomps: &decomps,
            circuits: rb.circuits,
        };
        let mut audit = Vec::new();
        let result = run_rb_audited(
            &device,
            &plan,
            rb.shots_per_circuit,
            mode,
            rb.fit,
            named_stream("rb-mitigated"),
            rb.audit.then_some(&mut audit),
        )
        .map_err(|e| CliError::stage(st, e))?;
        write(st, &self.artifacts.rb_mitigated(), &result.to_text())?;
        if rb.audit {
            write(st, &self.artifacts.rb_circuits(), &circuits_text(plan.n, &audit))?;
        }
        let raw = match fs::read_to_string(self.artifacts.rb_raw()) {
            Ok(text) => Some(RbResult::from_text(&text).map_err(|e| CliError::stage(st, e))?),
            Err(_) => None,
        };
        write(
            st,
            &self.artifacts.rb_paired(),
            &paired_text(&plan, raw.as_ref(), &result, &decomps).map_err(|e| CliError::stage(st, e))?,
        )?;
        Ok(())
    }

    pub fn stage_validate(&self) -> Result<(), CliError> {
        let st = Stage::Validate;
        let v = &self.config.validate;
        let estimate = self.load_estimate(st)?;
        let device = self.device(st, self.config.device.clone())?;
        let plan = RbPlan::generate(self.config.n(), &v.lengths, v.count, self.config.seed, named_stream("validate-plan"))
            .map_err(|e| CliError::stage(st, e))?;
        let report = validate_pauli_assumption(
            &device,
            &estimate.model,
            &plan,
            v.shots,
            self.config.rb.fit,
            v.bootstrap,
            named_stream("validate"),
        )
        .map_err(|e| CliError::stage(st, e))?;
        write(st, &self.artifacts.validation(), &report.to_text())?;
        write(st, &self.artifacts.validation_experimental(), &report.experimental.to_text())?;
        write(st, &self.artifacts.validation_simulated(), &report.simulated.to_text())?;
        Ok(())
    }

    pub fn stage_sweep(&self) -> Result<(), CliError> {
        let st = Stage::CrosstalkSweep;
        let spec = &self.config.device;
        if spec.n() != 2 {
            return Err(CliError::stage(st, "the crosstalk sweep needs a two-qubit device"));
        }
        // The mitigation is built from the crosstalk-free Pauli content of the device.
        let characterized = &spec.model;
        let rows = state_fidelity_sweep(spec, characterized, &self.config.sweep.ratios).map_err(|e| CliError::stage(st, e))?;
        let calibrated = calibrate_crosstalk_ratio(spec, characterized, self.config.sweep.target_error)
            .map_err(|e| CliError::stage(st, e))?;
        let at_device = state_fidelity_sweep(spec, characterized, &[0.0, spec.crosstalk_ratio])
            .map_err(|e| CliError::stage(st, e))?;
        let mut out = String::new();
        header(&mut out, "crosstalk sweep", 2);
        let _ = writeln!(out, "# fidelity of MS_YY / MS_ZZ on |00>; mitigated = characterized inverse noise applied");
        let _ = writeln!(out, "# columns: ratio raw_yy raw_zz mitigated_yy mitigated_zz");
        for r in &rows {
            let _ = writeln!(
                out,
                "{:?} {:?} {:?} {:?} {:?}",
                r.ratio, r.raw_yy, r.raw_zz, r.mitigated_yy, r.mitigated_zz
            );
        }
        let _ = writeln!(out, "# target_error {:?}", self.config.sweep.target_error);
        let _ = writeln!(out, "# calibrated_ratio {calibrated:?}");
        let _ = writeln!(out, "# device_ratio {:?}", spec.crosstalk_ratio);
        let _ = writeln!(
            out,
            "# device_zz_error {:?}",
            at_device[0].mitigated_zz - at_device[1].mitigated_zz
        );
        write(st, &self.artifacts.sweep(), &out)
    }
}

fn rates_text(model: &PauliModel) -> String {
    let mut out = String::new();
    header(&mut out, "gst rates", model.n());
    for (q, qm) in model.qubits.iter().enumerate() {
        let _ = writeln!(out, "# prep {q} {:?} {:?} {:?}", qm.prep[0], qm.prep[1], qm.prep[2]);
    }
    let _ = writeln!(out, "# columns: qubit gate p_I p_X p_Y p_Z infidelity");
    for (q, qm) in model.qubits.iter().enumerate() {
        for (g, ch) in &qm.gates {
            let r = ch.rates();
            let _ = writeln!(
                out,
                "{q} {g} {:?} {:?} {:?} {:?} {:?}",
                r[0],
                r[1],
                r[2],
                r[3],
                ch.error_probability()
            );
        }
    }
    out
}

fn gram_text(estimate: &GstEstimate) -> String {
    let mut out = String::new();
    header(&mut out, "gst gram", estimate.n());
    let _ = writeln!(out, "# g_ij = <<E_i|rho_j>>, measurement fiducial i, preparation fiducial j");
    let _ = writeln!(out, "# columns: qubit i j g_ij");
    for (q, g) in estimate.gram.iter().enumerate() {
        for i in 0..g.rows() {
            for (j, v) in g.row(i).iter().enumerate() {
                let _ = writeln!(out, "{q} {i} {j} {v:?}");
            }
        }
    }
    out
}

fn ptm_difference_text(estimate: &GstEstimate) -> pec_core::Result<String> {
    let mut out = String::new();
    header(&mut out, "gst ptm difference", estimate.n());
    let _ = writeln!(out, "# estimated minus ideal PTM entries");
    let _ = writeln!(out, "# columns: target gate row col value");
    for (q, qm) in estimate.model.qubits.iter().enumerate() {
        let single = PauliModel {
            qubits: vec![qm.clone()],
            ms_yy: None,
        };
        let est = GstEstimate {
            model: single,
            gram: Vec::new(),
            log_likelihood: Vec::new(),
            converged: estimate.converged,
            ms: None,
        };
        for g in Gate1::ALL {
            push_matrix(&mut out, &q.to_string(), &g.to_string(), &est.ptm_difference(&GateLabel::One(g))?);
        }
    }
    if estimate.model.ms_yy.is_some() {
        for gate in [GateLabel::MsYy, GateLabel::MsZz] {
            push_matrix(&mut out, "01", &gate.to_string(), &estimate.ptm_difference(&gate)?);
        }
    }
    Ok(out)
}

fn push_matrix(out: &mut String, target: &str, gate: &str, m: &pec_core::linalg::Matrix<f64>) {
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            let _ = writeln!(out, "{target} {gate} {r} {c} {v:?}");
        }
    }
}

fn decomposition_text(d: &DecompositionSet) -> String {
    let mut out = String::new();
    header(&mut out, "quasi-probability decompositions", d.n);
    let _ = writeln!(out, "# columns: target basis q C_local");
    let rows = std::iter::once(("state".to_string(), &d.state)).chain(d.gates.iter().map(|(g, q)| (g.to_string(), q)));
    for (target, q) in rows {
        for (label, c) in q.labels.iter().zip(&q.coefficients) {
            let _ = writeln!(out, "{target} {label} {c:?} {:?}", q.one_norm);
        }
    }
    out
}

fn sequences_text(plan: &RbPlan) -> String {
    let mut out = String::new();
    header(&mut out, "rb sequences", plan.n);
    let _ = writeln!(out, "# gates in time order: interleaved, computational, interleaved, ...");
    let _ = writeln!(out, "# columns: L index ideal_outcome gates...");
    for (&l, seqs) in plan.lengths.iter().zip(&plan.sequences) {
        for (i, s) in seqs.iter().enumerate() {
            let gates: Vec<String> = s.gates().iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{l} {i} {} {}", s.ideal_outcome, gates.join(" "));
        }
    }
    out
}

fn circuits_text(n: usize, audit: &[SequenceAudit]) -> String {
    let mut out = String::new();
    for a in audit {
        let _ = writeln!(out, "# sequence L {} index {}", a.length, a.index);
        out.push_str(&audit_text(n, &a.records));
    }
    out
}

fn paired_text(
    plan: &RbPlan,
    raw: Option<&RbResult>,
    mitigated: &RbResult,
    decomps: &DecompositionSet,
) -> pec_core::Result<String> {
    let mut out = String::new();
    header(&mut out, "rb paired", plan.n);
    let _ = writeln!(out, "# raw columns are nan when no raw run is on disk");
    let _ = writeln!(out, "# columns: L raw_mean raw_stderr mitigated_mean mitigated_stderr n_sequences total_c");
    for ((&l, seqs), m) in plan.lengths.iter().zip(&plan.sequences).zip(&mitigated.points) {
        let mut c = 0.0;
        for s in seqs {
            c += decomps.cost(&s.gates())?.total_c;
        }
        let c = c / seqs.len().max(1) as f64;
        let r = raw.and_then(|r| r.points.iter().find(|p| p.length == l));
        let (rm, rs) = r.map_or((f64::NAN, f64::NAN), |p| (p.mean, p.std_error));
        let _ = writeln!(out, "{l} {rm:?} {rs:?} {:?} {:?} {} {c:?}", m.mean, m.std_error, m.n_sequences);
    }
    let rate = |r: &RbResult| r.fit.as_ref().map(|f| (f.error_rate(), f.error_rate_se()));
    if let Some((e, s)) = raw.and_then(rate) {
        let _ = writeln!(out, "# raw_error_rate {e:?} {s:?}");
    }
    if let Some((e, s)) = rate(mitigated) {
        let _ = writeln!(out, "# mitigated_error_rate {e:?} {s:?}");
    }
    Ok(out)
}
