//! Pipeline configuration file.
//!
//! ```toml
//! schema_version = 1
//! seed = 20180101
//! output_dir = "out/single-qubit"
//! stages = ["gst", "qpd", "rb-raw", "rb-mitigated"]
//!
//! [device]
//! preset = "single-qubit-paper"   # or file = "device.toml", or an inline [device.spec]
//!
//! [gst]
//! shots = 10000
//!
//! [rb]
//! lengths = [2, 4, 8, 16, 32, 64]
//! count = 10
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pec_core::device::DeviceSpec;
use pec_core::gst::{VarianceModel, DEFAULT_MS_SHOTS, DEFAULT_SHOTS};
use pec_core::pec::DEFAULT_SHOTS_PER_CIRCUIT;
use pec_core::rb::{DecayModel, DEFAULT_BOOTSTRAP_SAMPLES, DEFAULT_TWO_QUBIT_COUNT};
use serde::Deserialize;

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable holding a `:`-separated list of directories searched for configs.
pub const CONFIG_PATH_ENV: &str = "PEC_LAB_CONFIG_PATH";

/// File looked up in the search path when no `--config` is given.
pub const DEFAULT_CONFIG_NAME: &str = "pec-lab.toml";

pub const DEFAULT_OUTPUT_DIR: &str = "pec-lab-out";

/// Pipeline stages in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Gst,
    Qpd,
    RbRaw,
    RbMitigated,
    Validate,
    CrosstalkSweep,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Gst,
        Stage::Qpd,
        Stage::RbRaw,
        Stage::RbMitigated,
        Stage::Validate,
        Stage::CrosstalkSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Gst => "gst",
            Stage::Qpd => "qpd",
            Stage::RbRaw => "rb-raw",
            Stage::RbMitigated => "rb-mitigated",
            Stage::Validate => "validate",
            Stage::CrosstalkSweep => "crosstalk-sweep",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
            format!("unknown stage `{s}` (expected one of {})", names.join(", "))
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    schema_version: u32,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    stages: Vec<String>,
    device: DeviceDoc,
    #[serde(default)]
    gst: GstDoc,
    #[serde(default)]
    qpd: QpdDoc,
    #[serde(default)]
    rb: RbDoc,
    #[serde(default)]
    validate: ValidateDoc,
    #[serde(default)]
    sweep: SweepDoc,
    #[serde(default)]
    thresholds: Thresholds,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceDoc {
    preset: Option<String>,
    file: Option<PathBuf>,
    spec: Option<toml::Table>,
    crosstalk_ratio: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GstDoc {
    shots: Option<u64>,
    ms_shots: Option<u64>,
    exact: Option<bool>,
    crosstalk: Option<bool>,
    ms_negative_tolerance: Option<f64>,
    variance: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct QpdDoc {
    source: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RbDoc {
    lengths: Option<Vec<usize>>,
    count: Option<usize>,
    shots: Option<u64>,
    circuits: Option<usize>,
    shots_per_circuit: Option<u64>,
    fit: Option<String>,
    offset: Option<f64>,
    audit: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ValidateDoc {
    lengths: Option<Vec<usize>>,
    count: Option<usize>,
    shots: Option<u64>,
    bootstrap: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SweepDoc {
    ratios: Option<Vec<f64>>,
    target_error: Option<f64>,
}

/// Optional pass/fail limits checked after `run` and `report`.
#[derive(Deserialize, Default, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum raw / mitigated error-rate ratio.
    pub min_suppression: Option<f64>,
    /// Upper bound on the mitigated error rate.
    pub max_mitigated_rate: Option<f64>,
    /// Largest tolerated |difference| / stderr of the Pauli validation.
    pub max_validation_sigma: Option<f64>,
}

/// Where decompositions come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpdSource {
    /// The characterized model written by the gst stage.
    Gst,
    /// The device's own Pauli rates (an oracle characterization).
    Truth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GstConfig {
    pub shots: u64,
    pub ms_shots: u64,
    /// Infinite-shot probabilities instead of sampled counts.
    pub exact: bool,
    /// Whether crosstalk is active while the tomography data is taken.
    pub crosstalk: bool,
    pub ms_negative_tolerance: f64,
    pub variance: VarianceModel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub count: usize,
    pub shots: u64,
    pub circuits: usize,
    pub shots_per_circuit: u64,
    pub fit: DecayModel,
    pub audit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateConfig {
    pub lengths: Vec<usize>,
    pub count: usize,
    pub shots: u64,
    pub bootstrap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub target_error: f64,
}

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub device: DeviceSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub gst: GstConfig,
    pub qpd_source: QpdSource,
    pub rb: RbConfig,
    pub validate: ValidateConfig,
    pub sweep: SweepConfig,
    pub thresholds: Thresholds,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub stages: Vec<Stage>,
    pub shots: Option<u64>,
    pub circuits: Option<usize>,
}

pub fn default_lengths(n: usize) -> Vec<usize> {
    // A single pi/2 pulse never returns to a Z eigenstate, so L = 1 is skipped.
    if n == 1 {
        vec![2, 4, 8, 16, 32, 64]
    } else {
        (1..=6).collect()
    }
}

pub fn default_count(n: usize) -> usize {
    if n == 1 {
        10
    } else {
        DEFAULT_TWO_QUBIT_COUNT
    }
}

pub fn default_sweep_ratios() -> Vec<f64> {
    (0..=20).map(|k| k as f64 * 0.0025).collect()
}

/// 1-based line of the first `key = ...` assignment, for error messages.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

struct Checker<'a> {
    origin: &'a str,
    text: &'a str,
}

impl Checker<'_> {
    fn fail(&self, key: &str, message: impl fmt::Display) -> CliError {
        match line_of(self.text, key) {
            Some(line) => CliError::Config(format!("{}:{line}: {message}", self.origin)),
            None => CliError::Config(format!("{}: {message}", self.origin)),
        }
    }

    fn positive<T: PartialOrd + Default + Copy + fmt::Display>(&self, key: &str, what: &str, v: T) -> Result<T, CliError> {
        if v > T::default() {
            Ok(v)
        } else {
            Err(self.fail(key, format!("{what} must be >= 1, got {v}")))
        }
    }
}

impl PipelineConfig {
    /// Parses `text`; `origin` names it in messages and `base` resolves relative device files.
    pub fn from_toml_str(text: &str, origin: &str, base: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let doc: ConfigDoc = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            match line {
                Some(line) => CliError::Config(format!("{origin}:{line}: {msg}")),
                None => CliError::Config(format!("{origin}: {msg}")),
            }
        })?;
        let ck = Checker { origin, text };
        if doc.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ck.fail(
                "schema_version",
                format!("unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})", doc.schema_version),
            ));
        }

        let mut device = load_device(&doc.device, &ck, base)?;
        let n = device.n();
        let seed = overrides.seed.or(doc.seed).unwrap_or(device.seed);
        device.seed = seed;

        let mut stages = Vec::new();
        for s in &doc.stages {
            stages.push(s.parse::<Stage>().map_err(|e| ck.fail("stages", e))?);
        }
        if !overrides.stages.is_empty() {
            stages = overrides.stages.clone();
        }
        stages.sort();
        stages.dedup();

        let g = &doc.gst;
        let gst = GstConfig {
            shots: ck.positive("shots", "[gst] shots", overrides.shots.or(g.shots).unwrap_or(DEFAULT_SHOTS))?,
            ms_shots: ck.positive("ms_shots", "[gst] ms_shots", overrides.shots.or(g.ms_shots).unwrap_or(DEFAULT_MS_SHOTS))?,
            exact: g.exact.unwrap_or(false),
            crosstalk: g.crosstalk.unwrap_or(true),
            ms_negative_tolerance: match g.ms_negative_tolerance {
                Some(t) if !(t >= 0.0) => {
                    return Err(ck.fail("ms_negative_tolerance", format!("ms_negative_tolerance must be >= 0, got {t}")))
                }
                Some(t) => t,
                None => pec_core::gst::NEGATIVE_RATE_TOLERANCE,
            },
            variance: match g.variance.as_deref() {
                None | Some("quarter-floor") => VarianceModel::QuarterShotFloor,
                Some("smoothed") => VarianceModel::Smoothed,
                Some(other) => {
                    return Err(ck.fail(
                        "variance",
                        format!("unknown variance model `{other}` (expected quarter-floor or smoothed)"),
                    ))
                }
            },
        };

        let qpd_source = match doc.qpd.source.as_deref() {
            None | Some("gst") => QpdSource::Gst,
            Some("truth") => QpdSource::Truth,
            Some(other) => return Err(ck.fail("source", format!("unknown qpd source `{other}` (expected gst or truth)"))),
        };

        let r = &doc.rb;
        let offset = r.offset.unwrap_or(0.5);
        let rb = RbConfig {
            lengths: check_lengths(&ck, "lengths", r.lengths.clone().unwrap_or_else(|| default_lengths(n)))?,
            count: ck.positive("count", "[rb] count", r.count.unwrap_or_else(|| default_count(n)))?,
            shots: ck.positive("shots", "[rb] shots", overrides.shots.or(r.shots).unwrap_or(1000))?,
            circuits: {
                let c = overrides.circuits.or(r.circuits).unwrap_or(2000);
                if c < 2 {
                    return Err(ck.fail("circuits", format!("circuits must be >= 2, got {c}")));
                }
                c
            },
            shots_per_circuit: ck.positive(
                "shots_per_circuit",
                "[rb] shots_per_circuit",
                r.shots_per_circuit.unwrap_or(DEFAULT_SHOTS_PER_CIRCUIT),
            )?,
            fit: match r.fit.as_deref() {
                None | Some("fixed") => DecayModel::FixedOffset(offset),
                Some("free") => DecayModel::FreeOffset,
                Some(other) => return Err(ck.fail("fit", format!("unknown fit model `{other}` (expected fixed or free)"))),
            },
            audit: r.audit.unwrap_or(false),
        };

        let v = &doc.validate;
        let validate = ValidateConfig {
            lengths: check_lengths(&ck, "lengths", v.lengths.clone().unwrap_or_else(|| default_lengths(n)))?,
            count: match v.count.unwrap_or(10) {
                c if c < 2 => return Err(ck.fail("count", format!("[validate] count must be >= 2, got {c}"))),
                c => c,
            },
            shots: ck.positive("shots", "[validate] shots", overrides.shots.or(v.shots).unwrap_or(1000))?,
            bootstrap: match v.bootstrap.unwrap_or(DEFAULT_BOOTSTRAP_SAMPLES) {
                b if b < 2 => return Err(ck.fail("bootstrap", format!("bootstrap must be >= 2, got {b}"))),
                b => b,
            },
        };

        let sweep = SweepConfig {
            ratios: match doc.sweep.ratios.clone() {
                Some(r) if r.is_empty() || r.iter().any(|x| !(*x >= 0.0)) => {
                    return Err(ck.fail("ratios", "ratios must be a non-empty list of values >= 0"))
                }
                Some(r) => r,
                None => default_sweep_ratios(),
            },
            target_error: match doc.sweep.target_error.unwrap_or(0.68e-3) {
                t if !(t > 0.0) => return Err(ck.fail("target_error", format!("target_error must be > 0, got {t}"))),
                t => t,
            },
        };

        Ok(Self {
            device,
            seed,
            output_dir: overrides
                .output_dir
                .clone()
                .or(doc.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            stages,
            gst,
            qpd_source,
            rb,
            validate,
            sweep,
            thresholds: doc.thresholds,
        })
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, &path.display().to_string(), base, overrides)
    }

    pub fn n(&self) -> usize {
        self.device.n()
    }

    /// Stages `run` executes: the configured list, or everything that applies.
    pub fn run_stages(&self) -> Vec<Stage> {
        if !self.stages.is_empty() {
            return self.stages.clone();
        }
        Stage::ALL
            .into_iter()
            .filter(|s| *s != Stage::CrosstalkSweep || self.n() == 2)
            .collect()
    }
}

fn check_lengths(ck: &Checker<'_>, key: &str, mut lengths: Vec<usize>) -> Result<Vec<usize>, CliError> {
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.is_empty() || lengths[0] == 0 {
        return Err(ck.fail(key, "lengths must be a non-empty list of values >= 1"));
    }
    Ok(lengths)
}

fn load_device(doc: &DeviceDoc, ck: &Checker<'_>, base: &Path) -> Result<DeviceSpec, CliError> {
    let given = [doc.preset.is_some(), doc.file.is_some(), doc.spec.is_some()];
    if given.iter().filter(|g| **g).count() != 1 {
        return Err(ck.fail("preset", "[device] needs exactly one of `preset`, `file` or an inline [device.spec] table"));
    }
    let mut spec = if let Some(name) = &doc.preset {
        DeviceSpec::preset(name).map_err(|e| ck.fail("preset", e))?
    } else if let Some(file) = &doc.file {
        let path = base.join(file);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ck.fail("file", format!("cannot read device file {}: {e}", path.display())))?;
        DeviceSpec::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    } else {
        let table = doc.spec.as_ref().expect("checked above");
        let text = toml::to_string(table).map_err(|e| CliError::Config(e.to_string()))?;
        DeviceSpec::from_toml_str(&text).map_err(|e| CliError::Config(format!("{} [device.spec]: {e}", ck.origin)))?
    };
    if let Some(r) = doc.crosstalk_ratio {
        if !(r >= 0.0) {
            return Err(ck.fail("crosstalk_ratio", format!("crosstalk_ratio must be >= 0, got {r}")));
        }
        spec = spec.with_crosstalk(r);
    }
    spec.validate().map_err(|e| CliError::Config(format!("{}: device: {e}", ck.origin)))?;
    Ok(spec)
}

/// Finds the config: an explicit path, that name inside the search path, or
/// the default file name in the search path and the working directory.
pub fn resolve_config_path(explicit: Option<&Path>, search_path: Option<&str>) -> Result<PathBuf, CliError> {
    let dirs: Vec<PathBuf> = search_path
        .map(|s| std::env::split_paths(s).filter(|p| !p.as_os_str().is_empty()).collect())
        .unwrap_or_default();
    match explicit {
        Some(p) if p.exists() => Ok(p.to_path_buf()),
        Some(p) if p.is_relative() => dirs
            .iter()
            .map(|d| d.join(p))
            .find(|c| c.exists())
            .ok_or_else(|| CliError::Config(format!("config {} not found", p.display()))),
        Some(p) => Err(CliError::Config(format!("config {} not found", p.display()))),
        None => dirs
            .iter()
            .map(|d| d.join(DEFAULT_CONFIG_NAME))
            .chain(std::iter::once(PathBuf::from(DEFAULT_CONFIG_NAME)))
            .find(|c| c.exists())
            .ok_or_else(|| {
                CliError::Config(format!(
                    "no config given and no {DEFAULT_CONFIG_NAME} found (pass --config or set {CONFIG_PATH_ENV})"
                ))
            }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig, CliError> {
        PipelineConfig::from_toml_str(text, "test.toml", Path::new("."), &Overrides::default())
    }

    const MINIMAL: &str = "schema_version = 1\n[device]\npreset = \"single-qubit-paper\"\n";

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.n(), 1);
        assert_eq!(c.rb.lengths, vec![2, 4, 8, 16, 32, 64]);
        assert_eq!(c.gst.shots, 10_000);
        assert_eq!(c.seed, c.device.seed);
        assert_eq!(c.run_stages().len(), 5);
        assert_eq!(c.rb.fit, DecayModel::FixedOffset(0.5));
    }

    #[test]
    fn unknown_key_names_its_line() {
        let err = parse(&format!("{MINIMAL}[rb]\ncount = 3\nbogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("test.toml:6"), "{err}");
    }

    #[test]
    fn zero_shots_is_rejected_with_line() {
        let err = parse(&format!("{MINIMAL}[rb]\n\nshots = 0\n")).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(err.to_string().contains("test.toml:6") && err.to_string().contains(">= 1"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            seed: Some(5),
            shots: Some(7),
            stages: vec![Stage::Qpd, Stage::Gst],
            ..Default::default()
        };
        let c = PipelineConfig::from_toml_str(MINIMAL, "t", Path::new("."), &o).unwrap();
        assert_eq!((c.seed, c.device.seed, c.gst.shots, c.rb.shots), (5, 5, 7, 7));
        assert_eq!(c.stages, vec![Stage::Gst, Stage::Qpd]);
    }

    #[test]
    fn device_sources_are_exclusive() {
        let text = "schema_version = 1\n[device]\npreset = \"noiseless\"\nfile = \"x.toml\"\n";
        assert!(parse(text).is_err());
    }

    #[test]
    fn inline_device() {
        let text = "schema_version = 1\n[device.spec]\nschema_version = 1\nn = 1\n[[device.spec.qubits]]\nprep = [0.0, 0.0, 1.0]\ndefault = [0.99, 0.01, 0.0, 0.0]\n";
        let c = parse(text).unwrap();
        assert_eq!(c.n(), 1);
    }

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
        }
        assert!("gts".parse::<Stage>().is_err());
    }
}
