use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ionres(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionres"))
        .args(args)
        .env_remove("IONRES_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn bessel_prints_first_zero_of_j0() {
    let o = ionres(&["bessel", "--order", "0", "--count", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "2.404826");
}

#[test]
fn bessel_json_lists_requested_count() {
    let o = ionres(&["bessel", "--order", "8", "--count", "3", "--json"]);
    let zeros: Vec<f64> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(zeros.len(), 3);
    assert!((zeros[0] - 12.225_092).abs() < 1e-5);
}

#[test]
fn single_site_current_is_half_the_rate() {
    let cfg = configs().join("single_site.cfg");
    let o = ionres(&["current", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let value: f64 = stdout(&o).trim().parse().unwrap();
    assert!((value / 5e7 - 1.0).abs() < 1e-3, "{value}");
}

#[test]
fn baseline_single_site_json() {
    let cfg = configs().join("single_site.cfg");
    let o = ionres(&["baseline", "--config", cfg.to_str().unwrap(), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["current"].as_f64().unwrap() / 5e7 - 1.0).abs() < 1e-3);
    assert_eq!(v["converged"], true);
}

#[test]
fn missing_config_names_the_path() {
    let o = ionres(&["current", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("/definitely/not/here.cfg"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "n_sites = 2\n\nfrobnicate = 1\nhopping = fast\n").unwrap();
    let o = ionres(&["current", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("bad.cfg:3"), "{err}");
    assert!(err.contains("bad.cfg:4"), "{err}");
}

#[test]
fn bad_override_is_reported_by_position() {
    let o = ionres(&["current", "--set", "n_sites=2", "--set", "gamma_drain=lots"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--set #2"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_and_flag_print_usage() {
    let o = ionres(&["teleport"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = ionres(&["current", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = ionres(&[
        "simulate",
        "--set",
        "n_sites=3",
        "--set",
        "horizon=2e-8",
        "--set",
        "sample_interval=5e-9",
        "--site",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,pop_1,pop_2,pop_3,incoherence,p_sink");
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[1].starts_with("0e0,1e0,0e0,0e0,"));
}

fn tiny_sweep(dir: &Path, name: &str, workers: &str) -> (String, serde_json::Value, Output) {
    let out = dir.join(format!("{name}.csv"));
    let o = ionres(&[
        "sweep",
        "--set",
        "n_sites=2",
        "--set",
        "hopping=0",
        "--set",
        "sweep.ratio_min=1",
        "--set",
        "sweep.ratio_max=2",
        "--set",
        "sweep.points=2",
        "--set",
        "sweep.gammas=0",
        "--set",
        "sweep.models=quantum",
        "--workers",
        workers,
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(&out).unwrap_or_default();
    let report = fs::read(out.with_extension("json"))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or(serde_json::Value::Null);
    (csv, report, o)
}

#[test]
fn severed_chain_sweep_carries_no_current() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, report, o) = tiny_sweep(dir.path(), "a", "1");
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "omega1_over_omega,gamma,model,current,converged,periods,incoherence"
    );
    assert_eq!(lines.len(), 3);
    for row in &lines[1..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[2], "quantum");
        assert_eq!(fields[3].parse::<f64>().unwrap(), 0.0);
        assert_eq!(fields[4], "true");
    }
    assert!(report["predicted_zeros"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_output_does_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let (one, _, _) = tiny_sweep(dir.path(), "one", "1");
    let (two, _, _) = tiny_sweep(dir.path(), "two", "2");
    let (again, _, _) = tiny_sweep(dir.path(), "again", "1");
    assert_eq!(one, two);
    assert_eq!(one, again);
}

#[test]
fn workers_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_ionres"))
        .args([
            "sweep",
            "--set",
            "n_sites=2",
            "--set",
            "hopping=0",
            "--set",
            "sweep.ratio_min=1",
        ])
        .args([
            "--set",
            "sweep.ratio_max=2",
            "--set",
            "sweep.points=2",
            "--set",
            "sweep.gammas=0",
        ])
        .args(["--out", out.to_str().unwrap()])
        .env("IONRES_WORKERS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("workers"), "{}", stderr(&o));
}

#[test]
fn estimate_report_has_labels_and_json() {
    let o = ionres(&["estimate"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("de Broglie wavelength"));
    assert!(text.contains("capacitive current"));
    let o = ionres(&["estimate", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}
