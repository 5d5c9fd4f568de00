use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wsep(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsep"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &[&str] = &["--reps", "10", "--n-ladder", "64,128,256"];

#[test]
fn simulate_writes_one_row_per_observation() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &[
            "simulate", "--model", "fgn", "--hurst", "0.75", "--g", "identity", "--n", "1024", "--seed", "1",
            "--out", "out",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "m = 1"));
    let csv = fs::read_to_string(dir.path().join("out/path.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("j,x,y"));
    assert_eq!(lines.count(), 1024);
}

#[test]
fn simulate_square_reports_rank_two() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &[
            "simulate", "--model", "white", "--g", "square", "--n", "16", "--out", "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "m = 2"));
    // Y = X^2 in every row.
    let csv = fs::read_to_string(dir.path().join("o/path.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[2] - f[1] * f[1]).abs() < 1e-12);
    }
}

#[test]
fn hurst_outside_range_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = wsep(&["simulate", "--hurst", "1.2"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("hurst must lie in (0.5, 1)"));
}

#[test]
fn indefinite_explicit_covariance_fails_embedding() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("lags.txt"), "1\n0.99\n-0.99\n").unwrap();
    let o = wsep(
        &[
            "simulate",
            "--model",
            "explicit:lags.txt",
            "--n",
            "3",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("circulant embedding failed"));
}

#[test]
fn coefficient_of_identity_at_zero() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &[
            "coefficients",
            "--g",
            "identity",
            "--q",
            "1",
            "--x",
            "0",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("-0.3989423"));
    let csv = fs::read_to_string(dir.path().join("o/coefficients.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v + 0.398_942_280_401_432_7).abs() < 1e-12);
}

#[test]
fn square_has_vanishing_first_coefficient() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &["coefficients", "--g", "square", "--q", "1", "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("o/coefficients.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 321);
    for row in rows {
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.abs() < 1e-12, "{row}");
    }
}

#[test]
fn unweighted_sup_of_second_coefficient() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &[
            "coefficients",
            "--g",
            "identity",
            "--q",
            "2",
            "--lambda",
            "0",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("q = 2: sup = 0.2419707"));
}

#[test]
fn constant_subordination_has_no_rank() {
    let dir = TempDir::new().unwrap();
    let o = wsep(&["coefficients", "--g", "hermite:3", "--out", "o"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("rank undetected"));
}

#[test]
fn hypothesis_violation_exits_four() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("bad.toml"),
        "[model]\nkind = \"fgn\"\nhurst = 0.55\n\n[g]\nkind = \"square\"\n",
    )
    .unwrap();
    let o = wsep(
        &["verify-reduction", "--config", "bad.toml", "--out", "o"],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("hypothesis violated: D ≥ 1/m"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn invalid_config_fields_are_reported_together() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &[
            "verify-limit",
            "--reps",
            "0",
            "--n-ladder",
            "128,64",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("n_ladder") && err.contains("replications"), "{err}");
}

#[test]
fn unreachable_epsilon_gives_slope_notice() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["verify-reduction", "--epsilon", "1000", "--out", "o"];
    args.extend_from_slice(SMALL);
    let o = wsep(&args, dir.path());
    let out = stdout(&o);
    assert!(out.contains("slope undefined"), "{out}");
    assert!(out.contains("[pass] reduction_decay[eps=1000]"));
    let report = fs::read_to_string(dir.path().join("o/reduction_report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["config"]["epsilon_grid"][0], 1000.0);
}

#[test]
fn few_replications_warn() {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["verify-limit", "--out", "o"];
    args.extend_from_slice(SMALL);
    let o = wsep(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: R < 100: distributional flags suppressed"));
    let plot = fs::read_to_string(dir.path().join("o/limit_plot.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("N,x,t,ks,threshold"));
    // Six probes times three lengths.
    assert_eq!(plot.lines().count(), 1 + 18);
}

#[test]
fn reruns_produce_identical_files() {
    let dir = TempDir::new().unwrap();
    let mut a = vec!["verify-limit", "--out", "a", "--workers", "1", "--keep-raw"];
    a.extend_from_slice(SMALL);
    let mut b = vec!["verify-limit", "--out", "b", "--workers", "3", "--keep-raw"];
    b.extend_from_slice(SMALL);
    wsep(&a, dir.path());
    wsep(&b, dir.path());
    for f in ["limit_report.json", "limit_plot.csv", "limit_raw.csv"] {
        let x = fs::read(dir.path().join("a").join(f)).unwrap();
        let y = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    for out in ["s1", "s2"] {
        wsep(
            &["simulate", "--n", "256", "--seed", "9", "--out", out],
            dir.path(),
        );
    }
    assert_eq!(
        fs::read(dir.path().join("s1/path.csv")).unwrap(),
        fs::read(dir.path().join("s2/path.csv")).unwrap()
    );
}

#[test]
fn printed_defaults_round_trip() {
    let dir = TempDir::new().unwrap();
    let o = wsep(&["config", "--print-defaults"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    fs::write(dir.path().join("d.toml"), &text).unwrap();
    let o = wsep(
        &[
            "verify-limit",
            "--config",
            "d.toml",
            "--out",
            "o",
            "--reps",
            "10",
            "--n-ladder",
            "64,128,256",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("o/limit_report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(json["config"]["master_seed"], 20240601);
    assert_eq!(json["config"]["model"]["hurst"], 0.75);
}

#[test]
fn chain_grid_for_identity_passes() {
    let dir = TempDir::new().unwrap();
    let o = wsep(
        &[
            "chain-grid",
            "--g",
            "identity",
            "--lambda",
            "1",
            "--kmax",
            "8",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let levels = fs::read_to_string(dir.path().join("o/chain_levels.csv")).unwrap();
    let mut rows = levels.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let slack = header.iter().position(|h| *h == "slack").unwrap();
    let rows: Vec<&str> = rows.collect();
    assert_eq!(rows.len(), 18);
    for row in rows {
        let v: f64 = row.split(',').nth(slack).unwrap().parse().unwrap();
        assert!(v >= -1e-9, "{row}");
    }
    let series = fs::read_to_string(dir.path().join("o/chain_series.csv")).unwrap();
    let sums: Vec<f64> = series
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("positive"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let n = sums.len();
    assert!(n >= 2 && sums[n - 1] - sums[n - 2] < 1e-8);
}

#[test]
fn chain_grid_depth_zero_starts_at_origin() {
    let dir = TempDir::new().unwrap();
    let o = wsep(&["chain-grid", "--kmax", "0", "--out", "o"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let nodes = fs::read_to_string(dir.path().join("o/chain_nodes.csv")).unwrap();
    assert_eq!(nodes.lines().nth(1), Some("positive,0,0,0"));
    assert!(nodes.lines().skip(1).all(|l| l.split(',').nth(1) == Some("0")));
}

#[test]
fn chain_grid_for_square_has_no_negative_anchor() {
    let dir = TempDir::new().unwrap();
    let o = wsep(&["chain-grid", "--g", "square", "--out", "o"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(!dir.path().join("o/chain_nodes.csv").exists());
}

#[test]
fn help_documents_exit_statuses() {
    let dir = TempDir::new().unwrap();
    let o = wsep(&["--help"], dir.path());
    let text = stdout(&o);
    for s in [
        "0  success",
        "1  verification",
        "2  usage",
        "3  numeric",
        "4  hypothesis",
    ] {
        assert!(text.contains(s), "{s}");
    }
}
