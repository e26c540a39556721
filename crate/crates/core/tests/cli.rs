use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn qvm(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qvm"));
    cmd.args(args).env_remove("QVM_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_SIMULATION: &str = "\
[run]
mode = simulate
seed = 3

[model]
L = 6
xi_noise = 0.3

[simulate]
n_steps = 40
transient = 10
snapshot_every = 20
band_every = 10
n_bins = 8
";

#[test]
fn rg_prints_the_exponents() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("rg");
    let out = qvm(&["rg", "--out", out_dir.to_str().unwrap()], &[]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for needle in ["z = 1.5", "chi = -0.5", "chi_rho = -1"] {
        assert!(stdout.contains(needle), "{stdout}");
    }
    assert!(out_dir.join("flow.csv").exists());
    assert_eq!(manifest(&out_dir)["mode"], "rg");
}

#[test]
fn zero_step_simulation_writes_header_only_series() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "zero.toml",
        "[run]\nmode = simulate\n[model]\nL = 4\n[simulate]\nn_steps = 0\n",
    );
    let out_dir = tmp.path().join("out");
    ok(&qvm(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()], &[]));
    assert_eq!(fs::read_to_string(out_dir.join("order.csv")).unwrap(), "step,time,phi\n");
    let m = manifest(&out_dir);
    assert_eq!(m["mode"], "simulate");
    assert_eq!(m["summary"]["measurements"], 0);
}

#[test]
fn simulation_output_is_reproducible_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sim.toml", SMALL_SIMULATION);
    let mut csvs = Vec::new();
    for (i, threads) in ["1", "3", "1"].iter().enumerate() {
        let dir = tmp.path().join(format!("run{i}"));
        ok(&qvm(
            &["simulate", "--config", &cfg, "--out", dir.to_str().unwrap(), "--threads", threads],
            &[],
        ));
        csvs.push(fs::read(dir.join("order.csv")).unwrap());
        assert_eq!(
            fs::read(dir.join("final.qvm")).unwrap(),
            fs::read(tmp.path().join("run0/final.qvm")).unwrap()
        );
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);

    let run0 = tmp.path().join("run0");
    let rows = String::from_utf8(csvs[0].clone()).unwrap().lines().count() - 1;
    assert_eq!(rows, 30);
    assert_eq!(manifest(&run0)["summary"]["measurements"], 30);
    assert!(run0.join("snapshots").read_dir().unwrap().count() >= 2);
    assert!(run0.join("bands.csv").exists());
}

#[test]
fn thread_count_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("env");
    let cfg = write_config(tmp.path(), "sim.toml", SMALL_SIMULATION);
    ok(&qvm(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()], &[("QVM_THREADS", "2")]));
    assert_eq!(manifest(&dir)["threads"], 2);

    let bad = qvm(&["simulate", "--config", &cfg, "--out", dir.to_str().unwrap()], &[("QVM_THREADS", "zero")]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("QVM_THREADS"));
}

#[test]
fn invalid_density_is_reported_with_its_key() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[run]\nmode = simulate\n[model]\nrho = -1\n");
    let out = qvm(&["simulate", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()], &[]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("rho"), "{stderr}");
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn mode_mismatch_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "rg.toml", "[run]\nmode = rg\n");
    let out = qvm(&["simulate", "--config", &cfg], &[]);
    assert!(!out.status.success());
}

#[test]
fn analyze_reads_a_simulation_snapshot() {
    let tmp = TempDir::new().unwrap();
    let sim_dir = tmp.path().join("sim");
    let cfg = write_config(tmp.path(), "sim.toml", SMALL_SIMULATION);
    ok(&qvm(&["simulate", "--config", &cfg, "--out", sim_dir.to_str().unwrap()], &[]));
    let snapshot = sim_dir.join("final.qvm");
    let acfg = write_config(
        tmp.path(),
        "analyze.toml",
        &format!(
            "[run]\nmode = analyze\n[analyze]\nsnapshot = {}\nn_bins = 8\nr_max = 2\n",
            snapshot.display()
        ),
    );
    let out_dir = tmp.path().join("analyze");
    ok(&qvm(&["analyze", "--config", &acfg, "--out", out_dir.to_str().unwrap()], &[]));
    let profile = fs::read_to_string(out_dir.join("profile.csv")).unwrap();
    assert_eq!(profile.lines().count(), 9);
    assert!(out_dir.join("correlation.csv").exists());
    assert!(out_dir.join("bands.csv").exists());
}

#[test]
fn hydro_full_and_goldstone_runs() {
    let tmp = TempDir::new().unwrap();
    let full = write_config(
        tmp.path(),
        "full.toml",
        "[run]\nmode = hydro\n[model]\nJ = 0.2\n[hydro]\nsystem = full\ngrid = 6, 6, 6\ndt = 0.01\nn_steps = 20\nnoise = true\nsnapshot_every = 10\n",
    );
    let full_dir = tmp.path().join("full");
    ok(&qvm(&["hydro", "--config", &full, "--out", full_dir.to_str().unwrap()], &[]));
    let series = fs::read_to_string(full_dir.join("hydro_series.csv")).unwrap();
    assert!(series.starts_with("step,time,mass,mean_vx,mean_vy,mean_vz,max_speed\n"));
    let drift = manifest(&full_dir)["summary"]["mass_drift"].as_f64().unwrap();
    assert!(drift.abs() < 1e-10);
    assert!(full_dir.join("final.qvh").exists());

    let gold = write_config(
        tmp.path(),
        "gold.toml",
        "[run]\nmode = hydro\n[hydro]\nsystem = goldstone\ngrid = 1, 64, 1\ndt = 0.05\nn_steps = 400\nmodes = 1, 2\n",
    );
    let gold_dir = tmp.path().join("gold");
    ok(&qvm(&["hydro", "--config", &gold, "--out", gold_dir.to_str().unwrap()], &[]));
    let disp = fs::read_to_string(gold_dir.join("dispersion.csv")).unwrap();
    assert_eq!(disp.lines().count(), 1 + 2 * 2);
    assert!(manifest(&gold_dir)["summary"]["sound_speed"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_writes_phase_diagram() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sweep.toml",
        "[run]\nmode = sweep\n[model]\nL = 4\n[simulate]\nn_steps = 20\n[sweep]\ngamma_s_inv = 0.2, 5\nxi = 0.1\n",
    );
    let dir = tmp.path().join("sweep");
    ok(&qvm(&["sweep", "--config", &cfg, "--out", dir.to_str().unwrap()], &[]));
    let csv = fs::read_to_string(dir.join("phase_diagram.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3, "{csv}");
    assert!(dir.join("phase_diagram.gp").exists());
}
