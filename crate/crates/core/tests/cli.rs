use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use romkit::harness::*;
use romkit::plant::{steady_state, PlantConfig};

const TINY: &str = r#"
seed = 3

[simulate]
horizon_samples = 400

[reduce]
sweep_orders = [4, 8]
order = 6
validation_samples = 60

[train]
pairs = 600
trajectory_samples = 50
hidden_layers = [12]

[train.optimizer]
max_epochs = 3

[estimate]
horizon_samples = 30
burn_in = 5
"#;

fn romkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_romkit")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, format!("out_dir = {:?}\n{TINY}", dir.join("out").to_str().unwrap())).unwrap();
    path.to_str().unwrap().to_owned()
}

fn pipeline(config: &str) {
    for cmd in ["simulate", "reduce", "train", "estimate", "benchmark", "report"] {
        let out = romkit(&[cmd, "--config", config]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

fn digests(out_dir: &Path) -> BTreeMap<String, String> {
    RunManifest::load(out_dir).unwrap().unwrap().reproducible_digests()
}

#[test]
fn tiny_pipeline_runs_end_to_end_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ca, cb) = (write_config(a.path()), write_config(b.path()));
    pipeline(&ca);
    pipeline(&cb);
    let out = a.path().join("out");

    // every file of every command is in the manifest with a matching digest
    let manifest = RunManifest::load(&out).unwrap().unwrap();
    for cmd in ["simulate", "reduce", "train", "estimate", "benchmark", "report"] {
        assert!(manifest.commands.contains_key(cmd), "{cmd} not recorded");
    }
    for name in [SNAPSHOTS, INPUTS, BASIS, RMSE_VS_ORDER, MODEL, LOSS_HISTORY, TRAIN_SUMMARY, ROLLOUT, TRUTH, MEASUREMENTS, ESTIMATE_SUMMARY, TIMING, SPEEDUP] {
        let entry = manifest.entry(name).unwrap_or_else(|| panic!("{name} missing from manifest"));
        assert_eq!(entry.sha256, sha256_file(&out.join(name)).unwrap(), "{name}");
    }
    assert!(manifest.entry(TIMING).unwrap().timing);
    assert!(!manifest.entry(MODEL).unwrap().timing);

    // identical artifacts apart from timing files
    let (da, db) = (digests(&out), digests(&b.path().join("out")));
    assert!(da.len() > 10);
    assert_eq!(da, db);
}

#[test]
fn snapshots_start_at_the_steady_state() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    assert!(romkit(&["simulate", "--config", &config]).status.success());
    let chi = read_snapshots(&dir.path().join("out").join(SNAPSHOTS)).unwrap();
    assert_eq!(chi.shape(), (103, 401));
    let plant = PlantConfig::default();
    let x_s = steady_state(&plant, &plant.nominal_input()).unwrap();
    assert!((chi.column(0) - &x_s).amax() < 1e-9);
    let inputs = read_table(&dir.path().join("out").join(INPUTS)).unwrap();
    assert_eq!(inputs.rows.len(), 400);
}

#[test]
fn a_missing_upstream_artifact_names_the_command_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = romkit(&["train", "--config", &config]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    assert!(lines[0].starts_with("error[missing-artifact]:"), "{stderr}");
    assert!(lines[0].contains("romkit simulate"), "{stderr}");
}

#[test]
fn bad_configs_fail_with_the_config_category() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "seed = 1\nno_such_key = 2\n").unwrap();
    let out = romkit(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]:"));

    let config = write_config(dir.path());
    let out = romkit(&["simulate", "--config", &config, "--filter", "ekf"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[config]:"));
}

#[test]
fn unknown_filters_are_rejected() {
    assert!("ekf".parse::<FilterKind>().is_ok());
    assert!("pod-ekf".parse::<FilterKind>().is_ok());
    assert!("pod-mlp-ekf".parse::<FilterKind>().is_ok());
    assert!("kalman".parse::<FilterKind>().is_err());
}

#[test]
fn seed_and_out_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let other = dir.path().join("elsewhere");
    let out = romkit(&["simulate", "--config", &config, "--seed", "9", "--out", other.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(other.join(SNAPSHOTS).is_file());
    assert!(!dir.path().join("out").exists());
    assert_eq!(RunManifest::load(&other).unwrap().unwrap().seeds, Seeds::derive(9));
}

#[test]
fn shipped_configs_match_the_built_in_defaults() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::load(&dir.join("default.toml")).unwrap();
    let mut expected = ExperimentConfig { out_dir: "runs/default".into(), ..Default::default() };
    assert_eq!(default, expected);

    let fast = ExperimentConfig::load(&dir.join("fast.toml")).unwrap();
    expected.apply_fast_profile();
    expected.out_dir = "runs/fast".into();
    assert_eq!(fast, expected);
}
