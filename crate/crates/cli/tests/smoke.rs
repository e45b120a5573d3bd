//! End-to-end smoke tests: run the binary with small workloads and check
//! exit codes and artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn latbath(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latbath"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

#[test]
fn levelset_writes_contour_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(dir.path(), &["levelset", "--jy", "2", "--delta", "-1"]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("levelset.csv")).unwrap();
    assert!(csv.starts_with("curve_id,"));
    assert!(csv.lines().count() > 100);
    let man = std::fs::read_to_string(dir.path().join("levelset_manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&man).unwrap();
    assert_eq!(v["command"], "levelset");
    assert_eq!(v["outputs"].as_array().unwrap().len(), 1);
}

#[test]
fn greens_methods_agree_roughly() {
    let dir = tempfile::tempdir().unwrap();
    let mut omegas = Vec::new();
    for method in ["exact", "tube", "stationary"] {
        let out = latbath(
            dir.path(),
            &[
                "greens", "--delta", "-1", "--rho-x", "8", "--rho-y", "8",
                "--method", method,
            ],
        );
        assert_ok(&out);
        let v: serde_json::Value =
            serde_json::from_slice(&out.stdout).expect("JSON on stdout");
        omegas.push(v["omega"].as_f64().unwrap());
    }
    for w in &omegas[1..] {
        assert!((w - omegas[0]).abs() < 0.3 * omegas[0].abs());
    }
}

#[test]
fn greens_at_van_hove_energy_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(
        dir.path(),
        &["greens", "--jy", "1.5", "--delta", "-1", "--rho-x", "5", "--rho-y", "0"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical failure"));
}

#[test]
fn missing_required_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(dir.path(), &["greens", "--rho-x", "5", "--rho-y", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_reports_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(
        dir.path(),
        &["scan", "--jy", "2", "--delta", "-1", "--offsets", "0.1,0.2"],
    );
    assert_ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let p = v["p"].as_f64().unwrap();
    assert!(p > 1.0 && p < 2.0, "p = {p}");
    assert!(dir.path().join("ghost_scan.csv").exists());
}

#[test]
fn orbit_trace_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(
        dir.path(),
        &["orbit", "--jy", "2", "--delta", "-1", "--alpha", "0.05", "--t-max", "20"],
    );
    assert_ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("orbit.csv")).unwrap();
    assert!(csv.starts_with("t,x,y,k_x,k_y"));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["energy_drift"].as_f64().unwrap() < 1e-6);
}

#[test]
fn evolve_writes_snapshot_matrix_and_populations() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(
        dir.path(),
        &["evolve", "--nx", "41", "--ny", "41", "--alpha", "0", "--times", "5"],
    );
    assert_ok(&out);
    let snap = std::fs::read_to_string(dir.path().join("snapshot_t0005.00.csv")).unwrap();
    assert_eq!(snap.lines().count(), 41);
    assert_eq!(snap.lines().next().unwrap().split(',').count(), 41);
    let pops = std::fs::read_to_string(dir.path().join("emitter_populations.csv")).unwrap();
    assert!(pops.starts_with("t,emitter_0"));
}

#[test]
fn ensemble_is_seed_deterministic() {
    let run = |dir: &Path| {
        let out = latbath(
            dir,
            &[
                "ensemble", "--nx", "21", "--ny", "21", "--alpha", "0", "--chi", "0.3",
                "--seed", "7", "--times", "3", "--realizations", "4",
            ],
        );
        assert_ok(&out);
        std::fs::read_to_string(dir.join("ensemble.csv")).unwrap()
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    assert_eq!(run(d1.path()), run(d2.path()));
}

#[test]
fn reproduce_unknown_figure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(dir.path(), &["reproduce", "fig9z"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown figure"));
}

#[test]
fn reproduce_fig1b_writes_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = latbath(dir.path(), &["reproduce", "fig1b"]);
    assert_ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("fig1b.csv")).unwrap();
    assert!(csv.starts_with("n,Omega_exact,Omega_tube,Omega_stat"));
    assert_eq!(csv.lines().count(), 21);
    assert!(dir.path().join("reproduce_fig1b_manifest.json").exists());
}

#[test]
fn recipe_file_drives_a_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.json");
    std::fs::write(
        &recipe,
        serde_json::json!({
            "name": "contour at the band quarter point",
            "operation": "levelset",
            "parameters": { "jy": 2.0, "delta": -1.0, "grid": 256 },
        })
        .to_string(),
    )
    .unwrap();
    let out = latbath(dir.path(), &["run", recipe.to_str().unwrap()]);
    assert_ok(&out);
    assert!(dir.path().join("levelset.csv").exists());
}

#[test]
fn malformed_recipe_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.json");
    std::fs::write(&recipe, "{\"name\": \"broken\"").unwrap();
    let out = latbath(dir.path(), &["run", recipe.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
