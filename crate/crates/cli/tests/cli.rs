use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pec_lab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pec-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("PEC_LAB_CONFIG_PATH")
        .output()
        .expect("spawn pec-lab")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

const NOISELESS: &str = r#"
schema_version = 1
seed = 3
[device]
preset = "noiseless"
[gst]
exact = true
[rb]
lengths = [2, 4, 8]
count = 2
circuits = 20
[validate]
lengths = [2, 4, 8]
count = 2
bootstrap = 10
"#;

fn with_config(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pec-lab.toml"), text).unwrap();
    dir
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = with_config(NOISELESS);
    let out = pec_lab(&["--output", "out", "run"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    for f in [
        "device.txt",
        "gst/estimate.json",
        "qpd/decompositions.json",
        "rb/raw.txt",
        "rb/mitigated.txt",
        "validate/validation.txt",
        "report.txt",
        "run_metadata.json",
    ] {
        assert!(root.join(f).is_file(), "{f}");
    }
    let report = fs::read_to_string(root.join("report.txt")).unwrap();
    assert!(report.contains("outputs_found device gst qpd rb-raw rb-mitigated validate"));
}

#[test]
fn report_on_empty_directory_is_valid_and_idempotent() {
    let dir = with_config(NOISELESS);
    let out = pec_lab(&["--output", "empty", "report"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("empty");
    assert!(!root.join("device.txt").exists());
    let first = fs::read(root.join("report.txt")).unwrap();
    let text = String::from_utf8_lossy(&first);
    assert!(text.contains("outputs_found none"));
    assert!(text.contains("\npauli-model-gap n/a n/a\n"));
    assert_eq!(code(&pec_lab(&["--output", "empty", "report"], dir.path())), 0);
    assert_eq!(fs::read(root.join("report.txt")).unwrap(), first);
}

#[test]
fn characterize_writes_the_full_dataset() {
    let dir = with_config(&NOISELESS.replace("exact = true", "shots = 500"));
    let out = pec_lab(&["--output", "o", "characterize"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data_rows = |p: &str| {
        fs::read_to_string(dir.path().join("o").join(p))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .count()
    };
    assert_eq!(data_rows("gst/dataset.txt"), 132);
    assert_eq!(data_rows("gst/rates.txt"), 11);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = with_config(NOISELESS);
    assert_eq!(code(&pec_lab(&["--shots", "0", "run"], dir.path())), 2);
    assert_eq!(code(&pec_lab(&["--circuits", "1", "run"], dir.path())), 2);
    assert_eq!(code(&pec_lab(&["--config", "missing.toml", "run"], dir.path())), 2);
    assert_eq!(code(&pec_lab(&["--stage", "tomography", "run"], dir.path())), 2);

    let bad = with_config(&NOISELESS.replace("[rb]", "[rb]\nrepeats = 3"));
    let out = pec_lab(&["run"], bad.path());
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("pec-lab.toml:"), "{msg}");
}

#[test]
fn missing_upstream_exits_with_3() {
    let dir = with_config(NOISELESS);
    let out = pec_lab(&["--output", "o", "decompose"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pec-lab characterize"));
    // A one-qubit device has no MS gates to sweep.
    assert_eq!(code(&pec_lab(&["--output", "o", "sweep-crosstalk"], dir.path())), 3);
}

#[test]
fn violated_threshold_exits_with_4() {
    let dir = with_config(&format!("{NOISELESS}\n[thresholds]\nmax_mitigated_rate = -1.0\n"));
    let out = pec_lab(&["--output", "o", "run"], dir.path());
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("o/report.txt").is_file());
}

#[test]
fn config_path_comes_from_the_environment() {
    let dir = with_config(NOISELESS);
    let elsewhere = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pec-lab"))
        .args(["--output", "o", "--stage", "gst", "run"])
        .current_dir(elsewhere.path())
        .env("PEC_LAB_CONFIG_PATH", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(elsewhere.path().join("o/gst/estimate.json").is_file());
}
