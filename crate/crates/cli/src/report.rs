//! Summary built from whatever stage outputs exist on disk.

use std::fmt::Write as _;
use std::fs;

use pec_core::gst::GstEstimate;
use pec_core::qpd::DecompositionSet;
use pec_core::rb::{RbResult, EXPONENT_CONVENTION};

use crate::config::Thresholds;
use crate::error::CliError;
use crate::pipeline::{Artifacts, ARTIFACT_SCHEMA_VERSION};

/// Value with an optional standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub found: Vec<&'static str>,
    pub device: Vec<(String, String)>,
    /// `(target, gate, infidelity)` of the characterized model.
    pub physical: Vec<(String, String, f64)>,
    pub costs: Vec<(String, f64)>,
    pub raw: Option<Measured>,
    pub mitigated: Option<Measured>,
    pub raw_decay: Option<f64>,
    pub mitigated_decay: Option<f64>,
    pub pauli_gap: Option<Measured>,
    pub crosstalk: Option<f64>,
    pub drift: Option<f64>,
    pub calibrated_ratio: Option<f64>,
}

fn comment_values(text: &str, key: &str) -> Option<Vec<f64>> {
    text.lines().find_map(|l| {
        let rest = l.strip_prefix('#')?.trim_start().strip_prefix(key)?;
        if !rest.starts_with(' ') {
            return None;
        }
        rest.split_whitespace().map(|v| v.parse().ok()).collect()
    })
}

fn fit_rate(r: &RbResult) -> Option<(Measured, f64)> {
    r.fit.as_ref().map(|f| {
        (
            Measured {
                value: f.error_rate(),
                std_error: Some(f.error_rate_se()),
            },
            f.decay_rate(),
        )
    })
}

impl Summary {
    /// Reads every known artifact under `artifacts.root`; unreadable files are skipped.
    pub fn collect(artifacts: &Artifacts) -> Self {
        let mut s = Summary::default();
        let read = |p: std::path::PathBuf| fs::read_to_string(p).ok();

        if let Some(text) = read(artifacts.device()) {
            s.found.push("device");
            for line in text.lines().filter(|l| !l.starts_with('#')) {
                if let Some((k, v)) = line.split_once(' ') {
                    s.device.push((k.to_string(), v.to_string()));
                }
            }
            if let Some(d) = s.device.iter().find(|(k, _)| k == "drift") {
                s.drift = Some(match d.1.as_str() {
                    "none" => 0.0,
                    v => v.rsplit(' ').next().and_then(|x| x.parse::<f64>().ok()).map_or(f64::NAN, f64::abs),
                });
            }
        }
        if let Some(est) = read(artifacts.gst_estimate()).and_then(|t| GstEstimate::from_json(&t).ok()) {
            s.found.push("gst");
            for (q, qm) in est.model.qubits.iter().enumerate() {
                for (g, ch) in &qm.gates {
                    s.physical.push((q.to_string(), g.to_string(), ch.error_probability()));
                }
            }
            if let Some(ms) = &est.model.ms_yy {
                s.physical.push(("01".into(), "MS_YY".into(), ms.error_probability()));
            }
        }
        if let Some(d) = read(artifacts.qpd_json()).and_then(|t| DecompositionSet::from_json(&t).ok()) {
            s.found.push("qpd");
            s.costs.push(("state".into(), d.state.one_norm));
            for (g, q) in &d.gates {
                s.costs.push((g.to_string(), q.one_norm));
            }
        }
        if let Some(r) = read(artifacts.rb_raw()).and_then(|t| RbResult::from_text(&t).ok()) {
            s.found.push("rb-raw");
            if let Some((m, d)) = fit_rate(&r) {
                s.raw = Some(m);
                s.raw_decay = Some(d);
            }
        }
        if let Some(r) = read(artifacts.rb_mitigated()).and_then(|t| RbResult::from_text(&t).ok()) {
            s.found.push("rb-mitigated");
            if let Some((m, d)) = fit_rate(&r) {
                s.mitigated = Some(m);
                s.mitigated_decay = Some(d);
            }
        }
        if let Some(text) = read(artifacts.validation()) {
            s.found.push("validate");
            if let Some(v) = comment_values(&text, "difference").filter(|v| v.len() == 2) {
                s.pauli_gap = Some(Measured {
                    value: v[0],
                    std_error: Some(v[1]),
                });
            }
        }
        if let Some(text) = read(artifacts.sweep()) {
            s.found.push("crosstalk-sweep");
            s.crosstalk = comment_values(&text, "device_zz_error").and_then(|v| v.first().copied());
            s.calibrated_ratio = comment_values(&text, "calibrated_ratio").and_then(|v| v.first().copied());
        }
        s
    }

    pub fn suppression(&self) -> Option<f64> {
        match (self.raw, self.mitigated) {
            (Some(r), Some(m)) if r.value > 0.0 => Some(r.value / m.value.abs()),
            _ => None,
        }
    }

    pub fn to_text(&self) -> String {
        let na = "n/a".to_string();
        let num = |v: Option<f64>| v.map_or(na.clone(), |x| format!("{x:.6e}"));
        let measured = |m: Option<Measured>| match m {
            Some(m) => format!("{:.6e} {}", m.value, num(m.std_error)),
            None => format!("{na} {na}"),
        };
        let mut out = String::new();
        let _ = writeln!(out, "# pec-lab report");
        let _ = writeln!(out, "# schema_version {ARTIFACT_SCHEMA_VERSION}");
        let found = if self.found.is_empty() { "none".to_string() } else { self.found.join(" ") };
        let _ = writeln!(out, "outputs_found {found}");

        let _ = writeln!(out, "\n[device]");
        for (k, v) in &self.device {
            let _ = writeln!(out, "{k} {v}");
        }

        let _ = writeln!(out, "\n[physical]");
        let _ = writeln!(out, "# characterized Pauli error probability 1 - p_I");
        let _ = writeln!(out, "# columns: target gate error");
        for (t, g, e) in &self.physical {
            let _ = writeln!(out, "{t} {g} {e:.6e}");
        }

        let _ = writeln!(out, "\n[costs]");
        let _ = writeln!(out, "# columns: target C_local");
        for (g, c) in &self.costs {
            let _ = writeln!(out, "{g} {c:.10}");
        }

        let _ = writeln!(out, "\n[rb]");
        let _ = writeln!(out, "# error rate = (d-1)/d (1-p); decay rate = 1-p; {EXPONENT_CONVENTION}");
        let _ = writeln!(out, "# columns: quantity value stderr");
        let _ = writeln!(out, "raw_error_rate {}", measured(self.raw));
        let _ = writeln!(out, "mitigated_error_rate {}", measured(self.mitigated));
        let _ = writeln!(out, "raw_decay_rate {} {na}", num(self.raw_decay));
        let _ = writeln!(out, "mitigated_decay_rate {} {na}", num(self.mitigated_decay));
        let _ = writeln!(out, "suppression {} {na}", num(self.suppression()));

        let _ = writeln!(out, "\n[residual]");
        let _ = writeln!(out, "# columns: source value stderr");
        let _ = writeln!(out, "# pauli-model-gap: sampled minus simulated RB error rate (validate)");
        let _ = writeln!(out, "# crosstalk: mitigated MS_ZZ state infidelity added at the device ratio (crosstalk-sweep)");
        let _ = writeln!(out, "# drift: Pauli rate change across the run (device)");
        let _ = writeln!(out, "pauli-model-gap {}", measured(self.pauli_gap));
        let _ = writeln!(out, "crosstalk {} {na}", num(self.crosstalk));
        let _ = writeln!(out, "drift {} {na}", num(self.drift));
        if let Some(r) = self.calibrated_ratio {
            let _ = writeln!(out, "\n[crosstalk]\ncalibrated_ratio {r:.6e}");
        }
        out
    }

    /// Every violated limit. A limit whose quantity is missing fails only when
    /// `require` is set.
    pub fn check(&self, t: &Thresholds, require: bool) -> Result<(), CliError> {
        let mut failures = Vec::new();
        let missing = |failures: &mut Vec<String>, what: &str| {
            if require {
                failures.push(what.to_string());
            }
        };
        if let Some(min) = t.min_suppression {
            match self.suppression() {
                Some(s) if s >= min => {}
                Some(s) => failures.push(format!("suppression {s:.3} < {min}")),
                None => missing(&mut failures, "suppression needs rb-raw and rb-mitigated outputs"),
            }
        }
        if let Some(max) = t.max_mitigated_rate {
            match self.mitigated {
                Some(m) if m.value <= max => {}
                Some(m) => failures.push(format!("mitigated error rate {:.3e} > {max:e}", m.value)),
                None => missing(&mut failures, "max_mitigated_rate needs rb-mitigated output"),
            }
        }
        if let Some(max) = t.max_validation_sigma {
            match self.pauli_gap {
                Some(Measured {
                    value,
                    std_error: Some(se),
                }) if (value / se).abs() <= max => {}
                Some(g) => failures.push(format!(
                    "validation difference {:.3e} exceeds {max} sigma",
                    g.value
                )),
                None => missing(&mut failures, "max_validation_sigma needs validate output"),
            }
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(CliError::Threshold(failures.join("; ")))
        }
    }
}
