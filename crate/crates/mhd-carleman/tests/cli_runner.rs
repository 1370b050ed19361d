//! End-to-end checks of the batch runner: a small weights run produces the
//! promised artifacts and manifest, schema violations are rejected with the
//! config exit class, and the plot reshaper reports missing inputs.

use std::path::PathBuf;

use mhd_carleman::cli;
use mhd_carleman::config::ExperimentConfig;

const SMALL: &str = r#"
version = 1

[domain]
lengths = [1.0, 1.0, 1.0]
n = [6, 6, 6]
t_final = 0.5
nt = 8

[weights]
kind = "face_linear"
gamma_excluded = ["z_min"]
t0 = 0.25
eps = 0.1
s_grid = { lo = 4.0, hi = 16.0, points = 5 }
s_grid_singular = { lo = 2.0, hi = 12.0, points = 5 }

[coefficients]
nu = 0.12
kappa = 0.1

[source]
r = { kind = "constant", value = [1.0, 0.5, 0.2] }
f = { kind = "bump", center = [0.5, 0.5, 0.6], width = 0.2, amp = 1.0 }
seed = 4242

[run]
n_samples = 2
"#;

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mhdlab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn weights_run_writes_artifacts_and_manifest() {
    let dir = scratch("weights");
    let cfg_path = dir.join("cfg.toml");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&cfg_path, SMALL).unwrap();
    cli::run("weights", &cfg_path, Some(dir.clone())).unwrap();
    let wdir = dir.join("weights");
    for name in [
        "validation.json",
        "invariants.json",
        "d.bin",
        "d.json",
        "singular_weight.bin",
        "psi.bin",
        "chi.bin",
        "omega_eps.bin",
        "q_eps.bin",
        "manifest.json",
    ] {
        assert!(wdir.join(name).exists(), "missing artifact {name}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(wdir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["outputs"].as_array().unwrap().len() >= 9);
    assert_eq!(manifest["seed"], 4242);
    // invariants actually checked
    let inv: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(wdir.join("invariants.json")).unwrap())
            .unwrap();
    assert_eq!(inv["alpha_negative_inside"], true);
    assert_eq!(inv["weight_zero_at_time_endpoints"], true);
    assert_eq!(inv["validation_pass"], true);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn schema_violations_map_to_config_exit_class() {
    let bad = SMALL.replace("nu = 0.12", "nu = -3.0");
    let err = ExperimentConfig::from_toml(&bad).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let unknown = SMALL.replace("[run]", "[run]\nwild_option = true");
    let err = ExperimentConfig::from_toml(&unknown).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn unknown_subcommand_rejected() {
    let dir = scratch("unknown");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("cfg.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let err = cli::run("frobnicate", &cfg_path, Some(dir.clone())).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn plots_on_empty_dir_lists_expectations() {
    let dir = scratch("plots");
    std::fs::create_dir_all(&dir).unwrap();
    let err = cli::emit_plots_data(&dir).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("sweep_"), "error should name the expected files: {msg}");
    assert!(msg.contains("stability_report.json"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn forward_then_plots_roundtrip() {
    let dir = scratch("fwd");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("cfg.toml");
    std::fs::write(&cfg_path, SMALL).unwrap();
    cli::run("forward", &cfg_path, Some(dir.clone())).unwrap();
    assert!(dir.join("forward/weak_div.json").exists());
    // a sweep run feeds the reshaper
    cli::run("parabolic-check", &cfg_path, Some(dir.clone())).unwrap();
    cli::emit_plots_data(&dir.join("parabolic-check")).unwrap();
    assert!(dir.join("parabolic-check/plot_ratio_vs_s.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}
