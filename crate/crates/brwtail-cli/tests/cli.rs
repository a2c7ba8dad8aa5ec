//! End-to-end CLI checks: exit codes, output round-tripping, determinism
//! of a few quick commands. The full acceptance gate lives in
//! `tests/acceptance.rs`.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use brwtail_cli::output::read_csv;

const REF_MODEL: &str = r#"{
  "offspring": {"0": 0.6, "2": 0.4},
  "step": {"kind": "atoms", "atoms": [[-1, 0.5], [1, 0.5]]}
}"#;

const GAUSSIAN_MODEL: &str = r#"{
  "offspring": {"0": 0.6967346701436833, "2": 0.3032653298563167},
  "step": {"kind": "gaussian", "mu": 0, "sigma": 1}
}"#;

const NEGATIVE_STEP_MODEL: &str = r#"{
  "offspring": {"0": 0.6, "2": 0.4},
  "step": {"kind": "atoms", "atoms": [[-1, 0.7], [-0.5, 0.3]]}
}"#;

fn write_model(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("brwtail-cli-test-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brwtail")).args(args).output().expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "command failed: {:?}\n{}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gamma_reports_reference_constants() {
    let model = write_model("ref.json", REF_MODEL);
    let text = stdout_of(&["--model", model.to_str().unwrap(), "--no-timestamp", "gamma"]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["gamma"].as_f64().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((v["critical_speed"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert!((v["drift"].as_f64().unwrap() - 0.6).abs() < 1e-12);
    assert_eq!(v["span"].as_f64().unwrap(), 1.0);
}

#[test]
fn exit_code_2_on_model_errors() {
    let missing = run(&["--model", "/nonexistent/model.json", "gamma"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = write_model("bad.json", r#"{"offspring": {"0": 0.6, "2": 0.3},
        "step": {"kind": "atoms", "atoms": [[1, 1.0]]}}"#);
    let out = run(&["--model", bad.to_str().unwrap(), "gamma"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_code_3_when_no_tilt_exists() {
    let model = write_model("neg.json", NEGATIVE_STEP_MODEL);
    let out = run(&["--model", model.to_str().unwrap(), "gamma"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_code_4_for_exact_mode_on_nonlattice() {
    let model = write_model("gauss.json", GAUSSIAN_MODEL);
    let out = run(&["--model", model.to_str().unwrap(), "tail", "--mode", "exact"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn exit_code_6_when_all_phase_rows_fail() {
    let model = write_model("ref6.json", REF_MODEL);
    let out = run(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "phase",
        "--c-list",
        "0.9",
        "--n-list",
        "40",
        "--samples",
        "50",
    ]);
    assert_eq!(out.status.code(), Some(6));
    // The sentinel row is still emitted before the nonzero exit.
    let text = String::from_utf8(out.stdout).unwrap();
    let (_, rows) = read_csv(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "nan");
}

#[test]
fn phase_mixed_rows_keep_exit_zero() {
    let model = write_model("refmix.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "--seed",
        "11",
        "phase",
        "--c-list",
        "0.3,0.9",
        "--n-list",
        "6",
        "--samples",
        "300",
    ]);
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header, vec!["c", "n", "p_cond", "stderr", "accepted", "rejected"]);
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let p: f64 = row[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn phase_exact_route_matches_thresholds() {
    let model = write_model("refexact.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "phase",
        "--route",
        "exact",
        "--c-list",
        "0.3,0.9",
        "--n-list",
        "40",
    ]);
    let (_, rows) = read_csv(&text).unwrap();
    let p_low: f64 = rows[0][2].parse().unwrap();
    let p_high: f64 = rows[1][2].parse().unwrap();
    assert!(p_low > 0.9, "subcritical speed row: {p_low}");
    assert!(p_high < 0.1, "supercritical speed row: {p_high}");
}

#[test]
fn near_critical_speed_warns_on_stderr() {
    let model = write_model("refwarn.json", REF_MODEL);
    let out = run(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "phase",
        "--route",
        "exact",
        "--c-list",
        "0.58",
        "--n-list",
        "10",
    ]);
    assert!(out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("within 5% of critical speed"), "stderr: {err}");
}

#[test]
fn tail_exact_csv_round_trips() {
    let model = write_model("refcsv.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "tail",
        "--mode",
        "exact",
        "--i-max",
        "60",
    ]);
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header, vec!["x", "u", "stderr", "e_gamma_x_u"]);
    assert_eq!(rows.len(), 61);
    // Sorted by x, last column stabilizes.
    let xs: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[0] < w[1]));
    // The limit column stabilizes in the interior; the last few rows are
    // closure-contaminated, which the stderr column reports.
    let tail_consts: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    let late_drift = (tail_consts[40] - tail_consts[50]).abs();
    assert!(late_drift < 1e-4, "limit column still drifting: {late_drift}");
    // Every cell parses back as a float.
    for row in &rows {
        for cell in row {
            cell.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn renewal_overshoot_formula_column() {
    let model = write_model("refovr.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "--seed",
        "5",
        "renewal-check",
        "--which",
        "overshoot",
        "--theta",
        "0.6931471805599453",
        "--x-list",
        "5,10,20",
        "--n",
        "5000",
    ]);
    let (_, rows) = read_csv(&text).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let formula: f64 = row[3].parse().unwrap();
        assert!((formula - 0.5).abs() < 1e-12, "lattice formula must equal e^-theta");
        let z: f64 = row[4].parse().unwrap();
        assert!(z.abs() < 4.0);
    }
}

#[test]
fn timestamp_header_present_unless_suppressed() {
    let model = write_model("refts.json", REF_MODEL);
    let with_ts = stdout_of(&["--model", model.to_str().unwrap(), "tail", "--mode", "exact", "--i-max", "45"]);
    assert!(with_ts.contains("# generated_at_unix:"));
    let without = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "tail",
        "--mode",
        "exact",
        "--i-max",
        "45",
    ]);
    assert!(!without.contains("generated_at_unix"));
}

#[test]
fn kappa_reports_killed_prefactor() {
    let model = write_model("refkappa.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "--seed",
        "21",
        "kappa",
        "--n",
        "30000",
        "--i-max",
        "60",
        "--killed",
        "1",
    ]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["term_boundary"].as_f64().unwrap() - 0.25).abs() < 1e-10);
    let kappa = v["kappa"].as_f64().unwrap();
    assert!(kappa > 0.0 && kappa <= 0.25);
    let pf = v["killed_prefactor"]["value"].as_f64().unwrap();
    let pf_se = v["killed_prefactor"]["stderr"].as_f64().unwrap();
    assert!((pf - 1.5).abs() <= 4.0 * pf_se, "prefactor {pf} ± {pf_se}");
    assert!(v["route_agreement"]["residual"].as_f64().unwrap() < 1e-3);
}

#[test]
fn phase_exact_killed_variant() {
    let model = write_model("refkilled.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "phase",
        "--route",
        "exact",
        "--killed",
        "1",
        "--c-list",
        "0.3,0.9",
        "--n-list",
        "40",
    ]);
    let (_, rows) = read_csv(&text).unwrap();
    let p_low: f64 = rows[0][2].parse().unwrap();
    let p_high: f64 = rows[1][2].parse().unwrap();
    assert!(p_low > 0.9, "killed subcritical-speed row: {p_low}");
    assert!(p_high < 0.1, "killed supercritical-speed row: {p_high}");
}

#[test]
fn kappa_gaussian_uses_mc_route() {
    let model = write_model("gausskappa.json", GAUSSIAN_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "--seed",
        "31",
        "kappa",
        "--n",
        "20000",
        "--curve-n",
        "50000",
        "--z-max",
        "6",
        "--grid-points",
        "25",
    ]);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let kappa = v["kappa"].as_f64().unwrap();
    assert!(kappa > 0.0 && kappa <= 1.0);
    assert!(kappa <= v["term_boundary"].as_f64().unwrap());
    assert_eq!(v["route_agreement"]["route"], "mc_tail");
    assert_eq!(v["provenance"]["lattice"], false);
}

#[test]
fn renewal_u_check_flags_stay_false() {
    let model = write_model("refu.json", REF_MODEL);
    let text = stdout_of(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "--seed",
        "17",
        "renewal-check",
        "--which",
        "u",
        "--pairs",
        "6",
        "--n",
        "4000",
    ]);
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header.last().unwrap(), "linear_violation");
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert_eq!(row[6], "false", "subadditivity flagged: {row:?}");
        assert_eq!(row[7], "false", "linear bound flagged: {row:?}");
    }
}

#[test]
fn out_dir_writes_csv_meta_and_gnuplot() {
    let model = write_model("refout.json", REF_MODEL);
    let dir = std::env::temp_dir().join(format!("brwtail-out-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    let out = run(&[
        "--model",
        model.to_str().unwrap(),
        "--no-timestamp",
        "--gnuplot",
        "--out",
        dir.to_str().unwrap(),
        "tail",
        "--mode",
        "exact",
        "--i-max",
        "50",
    ]);
    assert!(out.status.success());
    let csv_text = fs::read_to_string(dir.join("tail.csv")).unwrap();
    let (_, rows) = read_csv(&csv_text).unwrap();
    assert_eq!(rows.len(), 51);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("tail.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["spec"]["command"], "tail");
    assert!(dir.join("tail.gnuplot").exists());
    assert!(dir.join("tail_function.csv").exists());
    let tf = fs::read_to_string(dir.join("tail_function.csv")).unwrap();
    assert!(tf.starts_with("i,x,u,envelope,residual"));
}
