use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polsqueeze"))
}

fn write_config(dir: &Path, energies: &str) -> std::path::PathBuf {
    let path = dir.join("run.json");
    let text = format!(
        r#"{{
  "grid": {{"n_points": 256, "tau_window": 30.0}},
  "stepper": {{"zeta_max": 0.2, "d_zeta": 0.01}},
  "pulse": {{"energy_pj": {energies}}},
  "trajectories": 40,
  "seed": 9,
  "output_dir": "out",
  "fibre_label": "test"
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn sweep_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[10.0, 30.0]");
    let out = dir.path().join("custom");
    let st = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--seed", "11", "--trajectories", "48", "--threads", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("sweep_detected.csv").is_file());
    let meta: Value = serde_json::from_str(&fs::read_to_string(out.join("sweep_metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["trajectories"], 48);
    assert_eq!(meta["fibre_label"], "test");
    assert!(meta["version"].is_string());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().args(["sweep"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"pulse": {"energy_pj": 1.0}, "trajectories": 1}"#).unwrap();
    let st = bin().args(["sweep", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin().args(["sweep", "--config"]).arg(dir.path().join("missing.json")).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn all_points_failing_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[0.0]");
    let st = bin().current_dir(dir.path()).args(["sweep", "--threads", "1", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(3));
}

fn write_sweep(path: &Path, angles: &[(f64, f64)]) {
    let mut s = String::from("energy_pj,theta_K_rad,phi_waveplate_deg,rho_s,rho_a,rho_s_db,rho_a_db,se_s,se_a,n_traj\n");
    for (i, (e, th)) in angles.iter().enumerate() {
        let (rs, ra) = (0.5 - 0.03 * i as f64, 2.0 + 3.0 * i as f64);
        s += &format!("{e},{th},0,{rs},{ra},0,0,0,0,100\n");
    }
    fs::write(path, s).unwrap();
}

fn write_measured(path: &Path, angles: &[(f64, f64)]) {
    let mut s = String::from("energy_pj,theta_deg\n");
    for (e, th) in angles {
        s += &format!("{e},{}\n", th.to_degrees());
    }
    fs::write(path, s).unwrap();
}

#[test]
fn fit_reports_and_orders_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim: Vec<(f64, f64)> = (0..6).map(|i| (5.0 + 10.0 * i as f64, 2.7 + 0.05 * i as f64)).collect();
    write_sweep(&d.join("a.csv"), &sim);
    write_sweep(&d.join("b.csv"), &sim);
    // a: exactly the Kerr angles; b: pulled toward the S1 axis
    write_measured(&d.join("ma.csv"), &sim);
    let pulled: Vec<(f64, f64)> = sim.iter().map(|&(e, th)| (e, th + 0.004 * e)).collect();
    write_measured(&d.join("mb.csv"), &pulled);
    let st = bin()
        .current_dir(d)
        .args(["fit", "--sweep", "a.csv", "--measured", "ma.csv", "--label", "short"])
        .args(["--sweep", "b.csv", "--measured", "mb.csv", "--label", "long", "--out", "fit"])
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let short: Value = serde_json::from_str(&fs::read_to_string(d.join("fit/fit_short.json")).unwrap()).unwrap();
    for key in ["c_p", "c_0", "rms_residual_deg", "per_point_residuals"] {
        assert!(short.get(key).is_some(), "missing {key}");
    }
    assert_eq!(short["c_p"].as_f64(), Some(0.0));
    let summary: Value = serde_json::from_str(&fs::read_to_string(d.join("fit/fit_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ordering_by_c_p"], serde_json::json!(["short", "long"]));
    assert!(summary["fits"][1]["c_p"].as_f64().unwrap() > 0.0);
    assert!(d.join("fit/fit_curve_long.csv").is_file());
}

#[test]
fn fit_outside_simulated_range_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim: Vec<(f64, f64)> = (0..4).map(|i| (10.0 + 10.0 * i as f64, 2.8)).collect();
    write_sweep(&d.join("s.csv"), &sim);
    write_measured(&d.join("m.csv"), &[(5.0, 2.8), (20.0, 2.8)]);
    let st = bin().current_dir(d).args(["fit", "--sweep", "s.csv", "--measured", "m.csv"]).status().unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn snapshots_write_one_csv_per_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "4.8");
    let st = bin().current_dir(dir.path()).args(["snapshots", "--config"]).arg(&cfg).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let out = dir.path().join("out");
    let n = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")).count();
    assert_eq!(n, 5);
    let first = fs::read_to_string(out.join("snapshot_4.8pJ_000.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap(), "tau,intensity_x,intensity_y,omega,spectral_power_x,spectral_power_y");
    assert_eq!(first.lines().count(), 257);
}

#[test]
fn calibrate_passes_at_shot_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "20.0");
    let st = bin().current_dir(dir.path()).args(["calibrate", "--trajectories", "400", "--config"]).arg(&cfg).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stdout));
    assert!(dir.path().join("out/calibration.csv").is_file());
}

#[test]
fn sample_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        polsqueeze::config::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
}
