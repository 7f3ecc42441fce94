//! End-to-end tests of the command-line surface: exit codes, file outputs,
//! determinism across reruns and worker counts, crash-consistency markers.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pamfract"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SIM_CONFIG: &str = r#"
[run]
kind = "simulate"
master_seed = 42
ensemble_size = 2

[grid]
dx = 0.1
dt = 0.01
x_min = -1.6
x_max = 1.6
t_end = 0.2
snapshot_times = [0.1, 0.2]

[init]
kind = "flat"
c = 1.0
"#;

#[test]
fn validate_ok_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    write(&cfg, SIM_CONFIG);
    let out = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("config valid"));
}

#[test]
fn validation_failure_exits_1_with_named_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    write(
        &cfg,
        &SIM_CONFIG
            .replace("dt = 0.01", "dt = 0.02")
            .replace("kind = \"flat\"", "kind = \"flat\"")
            .replace("[grid]", "[grid]\nscheme = \"explicit_euler\""),
    );
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dt <= dx^2"), "stderr: {stderr}");
}

#[test]
fn missing_config_exits_1() {
    let out = bin().arg("simulate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_outputs_and_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    write(&cfg, SIM_CONFIG);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for (dir, workers) in [(&out_a, "1"), (&out_b, "2")] {
        let out = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    // Byte-identical data files regardless of worker count and rerun.
    for name in ["traj_00000.pamf", "traj_00001.pamf", "traj_00000.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    // Completed runs have manifests and no incomplete marker.
    assert!(out_a.join("manifest.json").exists());
    assert!(!out_a.join("RUNNING.incomplete").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["trajectories_ok"], 2);
    assert_eq!(manifest["kind"], "simulate");
    assert!(manifest["outputs"].as_array().unwrap().len() >= 4);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    write(&cfg, SIM_CONFIG);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_a)
        .output()
        .unwrap();
    bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "43", "--out"])
        .arg(&out_b)
        .output()
        .unwrap();
    let a = std::fs::read(out_a.join("traj_00000.pamf")).unwrap();
    let b = std::fs::read(out_b.join("traj_00000.pamf")).unwrap();
    assert_ne!(a, b, "different seeds must change the data");
}

#[test]
fn kind_mismatch_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    write(&cfg, SIM_CONFIG);
    let out = bin().args(["moments", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn xi_gen_then_dim_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let xi_cfg = tmp.path().join("xi.toml");
    write(
        &xi_cfg,
        r#"
[run]
kind = "xi_gen"
master_seed = 1

[xi]
q = 2.0
n_max = 6
"#,
    );
    let xi_out = tmp.path().join("xi_out");
    let out = bin()
        .args(["xi-gen", "--config"])
        .arg(&xi_cfg)
        .arg("--out")
        .arg(&xi_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let set_file = xi_out.join("xi.csv");
    assert!(set_file.exists());

    let dim_cfg = tmp.path().join("dim.toml");
    write(
        &dim_cfg,
        &format!(
            r#"
[run]
kind = "dim"
master_seed = 1

[dim]
source = "file"
file = "{}"
n_min = 1
n_max = 6
rho_step = 0.1
strategy = "greedy_multiscale"
"#,
            set_file.display()
        ),
    );
    let dim_out = tmp.path().join("dim_out");
    let out = bin()
        .args(["dim", "--config"])
        .arg(&dim_cfg)
        .arg("--out")
        .arg(&dim_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dim_out.join("content.csv").exists());
    assert!(dim_out.join("dimension.json").exists());
}

#[test]
fn tails_pipeline_writes_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tails.toml");
    write(
        &cfg,
        r#"
[run]
kind = "tails"
master_seed = 9
ensemble_size = 150

[grid]
dx = 0.1
dt = 0.01
x_min = -1.6
x_max = 1.6
t_end = 0.2
snapshot_times = [0.2]

[init]
kind = "flat"
c = 1.0

[tails]
event = "one_point_lower"
t = 0.2
x = 0.0
sweep = [0.5, 1.0, 1.5]
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["tails", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("tails.csv")).unwrap();
    assert!(csv.starts_with("gamma,hits,n,p_hat"));
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("tails.json")).unwrap())
            .unwrap();
    assert_eq!(json["curve"]["rows"].as_array().unwrap().len(), 3);
    // Monotone (containment) hits across the gamma sweep.
    let rows = json["curve"]["rows"].as_array().unwrap();
    let hits: Vec<u64> = rows.iter().map(|r| r["hits"].as_u64().unwrap()).collect();
    assert!(hits.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn proxy_error_decays_with_window() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("proxy.toml");
    write(
        &cfg,
        r#"
[run]
kind = "proxy"
master_seed = 12
ensemble_size = 1

[grid]
dx = 0.1
dt = 0.02
x_min = -6.4
x_max = 6.4
t_end = 1.0
snapshot_times = [1.0]

[init]
kind = "flat"
c = 1.0

[proxy]
t = 1.0
center = 0.0
half_widths = [1.0, 4.0]
pairs = 150
"#,
    );
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["proxy", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("proxy.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    // Wider noise window tracks the full solution more closely.
    assert!(
        rows[1][1] < rows[0][1],
        "half_width 4 error {} should be below half_width 1 error {}",
        rows[1][1],
        rows[0][1]
    );
}

#[test]
fn env_var_sets_default_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.toml");
    write(&cfg, SIM_CONFIG);
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("PAMFRACT_WORKERS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out_dir.join("manifest.json").exists());
}
