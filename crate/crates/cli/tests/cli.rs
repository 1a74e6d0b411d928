use std::process::Command;

use cvqss_cli::commands::SWEEP_HEADER;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("cvqss").chain(args.iter().copied());
    let code = cvqss_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn column(header: &str, name: &str) -> usize {
    header.split(',').position(|h| h == name).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn sweep_single_point() {
    let (code, out, _) =
        run(&["sweep", "--r-min", "0.5", "--r-max", "0.5", "--r-steps", "1", "--transmissivities", "1"]);
    assert_eq!(code, 0);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], SWEEP_HEADER);
    assert!(lines[1].starts_with("0.5,1,"));
}

#[test]
fn sweep_rows_respect_bound_ordering() {
    let (code, out, _) = run(&["sweep", "--n", "3", "--k", "2", "--topology", "star", "--r-steps", "16"]);
    assert_eq!(code, 0);
    let header = out.lines().next().unwrap();
    let (eve, qss) = (column(header, "K_eve"), column(header, "K_qss"));
    let data = rows(&out);
    assert_eq!(data.len(), 16 * 4);
    for row in data {
        assert!(row[qss] <= row[eve] + 1e-9, "{row:?}");
    }
}

#[test]
fn sweep_json_matches_csv() {
    let args = ["sweep", "--r-steps", "5", "--transmissivities", "1,0.9"];
    let (_, csv, _) = run(&args);
    let (code, json, _) = run(&[&args[..], &["--format", "json"]].concat());
    assert_eq!(code, 0);
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    let list = parsed.as_array().unwrap();
    let data = rows(&csv);
    assert_eq!(list.len(), data.len());
    let kq = column(SWEEP_HEADER, "K_qss");
    for (entry, row) in list.iter().zip(&data) {
        assert!((entry["K_qss"].as_f64().unwrap() - row[kq]).abs() < 1e-9);
        assert_eq!(entry["T"].as_f64().unwrap(), row[1]);
    }
}

#[test]
fn threshold_reports_verdicts() {
    let (code, out, _) = run(&["threshold", "--k", "3", "--n", "3", "--r", "0", "--T", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("no secure key"), "{out}");

    let (code, out, _) = run(&["threshold", "--r", "1.15", "--T", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("verdict: secure key"), "{out}");

    let (code, out, _) = run(&["threshold", "--k", "3", "--n", "5", "--format", "json"]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["access"].as_array().unwrap().len(), 10);
    assert_eq!(report["adversarial"].as_array().unwrap().len(), 10);
}

#[test]
fn threshold_csv_lists_every_structure() {
    let (code, out, _) = run(&["threshold", "--k", "2", "--n", "3", "--format", "csv"]);
    assert_eq!(code, 0);
    let access = out.lines().filter(|l| l.starts_with("access,")).count();
    let adversary = out.lines().filter(|l| l.starts_with("adversarial,")).count();
    assert_eq!((access, adversary), (3, 3));
}

#[test]
fn configuration_errors_exit_1() {
    for args in [
        &["sweep", "--r-min", "1", "--r-max", "0.5"][..],
        &["threshold", "--n", "25"],
        &["threshold", "--k", "4", "--n", "3"],
        &["threshold", "--T", "1.5"],
        &["simulate", "--basis-probability", "0"],
        &["sweep", "--topology", "ring"],
        &["frobnicate"],
    ] {
        let (code, _, err) = run(args);
        assert_eq!(code, 1, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
}

#[test]
fn help_exits_0() {
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("sweep"));
}

#[test]
fn unwritable_output_exits_2() {
    let (code, _, err) = run(&["sweep", "--r-steps", "2", "--output", "/nonexistent/dir/out.csv"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn unphysical_covariance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "0.25 0\n0 0.25\n").unwrap();
    let (code, out, _) = run(&["validate", "--cov-file", bad.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(out.contains("UNPHYSICAL"), "{out}");

    let good = dir.path().join("good.txt");
    std::fs::write(&good, "0.5, 0\n0, 0.5\n").unwrap();
    let (code, _, _) = run(&["validate", "--cov-file", good.to_str().unwrap()]);
    assert_eq!(code, 0);

    let (code, _, _) = run(&["validate", "--r", "1", "--T", "0.8", "--n", "4", "--topology", "star"]);
    assert_eq!(code, 0);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# small grid\nr_min = 0.2\nr_max = 0.4\nr_steps = 3\ntransmissivities = 0.9\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let (code, out, _) = run(&["sweep", "--config", cfg]);
    assert_eq!(code, 0);
    let data = rows(&out);
    assert_eq!(data.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![0.2, 0.3, 0.4]);
    assert!(data.iter().all(|r| r[1] == 0.9));

    let (code, out, _) = run(&["sweep", "--config", cfg, "--r-steps", "2", "--transmissivities", "1"]);
    assert_eq!(code, 0);
    let data = rows(&out);
    assert_eq!(data.iter().map(|r| (r[0], r[1])).collect::<Vec<_>>(), vec![(0.2, 1.0), (0.4, 1.0)]);

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "colour = blue\n").unwrap();
    let (code, _, _) = run(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn simulate_verdicts_and_outputs() {
    let (code, out, _) = run(&["simulate", "--rounds", "200000", "--seed", "3", "--quiet"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "SECURE");

    let (code, out, _) =
        run(&["simulate", "--rounds", "200000", "--seed", "3", "--r", "0.1", "--T", "0.85", "--quiet"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "INSECURE");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("summary.csv");
    let (code, out, _) =
        run(&["simulate", "--rounds", "50000", "--seed", "9", "--format", "json", "--output", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(parsed["verdict"].is_string());
    assert_eq!(parsed["report"]["config"]["rounds"].as_u64(), Some(50000));
    let summary = std::fs::read_to_string(&path).unwrap();
    assert!(summary.starts_with("quantity,structure,empirical,standard_error,analytic,sifted_rounds\n"));
    assert!(summary.lines().count() > 3);
}

#[test]
fn binary_matches_library_entry_point() {
    let args = ["sweep", "--r-steps", "4", "--transmissivities", "0.95"];
    let out = Command::new(env!("CARGO_BIN_EXE_cvqss")).args(args).output().unwrap();
    assert!(out.status.success());
    let (_, lib_out, _) = run(&args);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), lib_out);

    let status = Command::new(env!("CARGO_BIN_EXE_cvqss")).args(["threshold", "--n", "30"]).output().unwrap().status;
    assert_eq!(status.code(), Some(1));
}
