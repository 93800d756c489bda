use std::fs;
use std::process::{Command, Output};

fn uwqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwqkd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Non-comment lines after the header, split into cells.
fn rows(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let body = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, body)
}

fn num(cell: &str) -> f64 {
    cell.parse().unwrap_or_else(|_| panic!("not a number: {cell:?}"))
}

fn body(csv: &str) -> String {
    csv.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn bb84_curve_crosses_threshold_near_179_m() {
    let o = uwqkd(&["qber-curve", "--protocol", "bb84", "--water", "clear", "--scenario", "1", "--d1", "0.3",
        "--L-max", "250", "--points", "251"]);
    assert!(o.status.success());
    let (header, rows) = rows(&stdout(&o));
    assert_eq!(header, ["L_m", "qber_analytic", "gain", "corr_xx", "qber_mc", "mc_stderr"]);
    let crossing = rows.windows(2).find(|w| num(&w[0][1]) < 0.11 && num(&w[1][1]) >= 0.11).unwrap();
    let l = num(&crossing[1][0]);
    assert!((l - 179.05).abs() / 179.05 < 0.02, "crossing at {l}");
    for r in &rows {
        assert!(r[3].is_empty() && r[4].is_empty() && r[5].is_empty());
        assert!(num(&r[1]).is_finite() && num(&r[2]).is_finite());
    }
}

#[test]
fn single_point_at_origin_sits_at_detector_floor() {
    let o = uwqkd(&["qber-curve", "--points", "1"]);
    let (_, rows) = rows(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert_eq!(num(&rows[0][0]), 0.0);
    assert!((num(&rows[0][1]) - 0.033).abs() < 1e-4);
}

#[test]
fn manifest_is_embedded() {
    let out = stdout(&uwqkd(&["qber-curve", "--points", "2", "--protocol", "sarg04", "--water", "coastal"]));
    assert!(out.starts_with("# command: qber-curve\n"));
    for key in ["# version: uwqkd", "# protocol: sarg04", "# water: coastal", "# scenario: scenario1", "# e_det = 0.033"] {
        assert!(out.contains(key), "missing {key}");
    }
}

#[test]
fn monte_carlo_columns_agree_and_repeat() {
    let args = ["qber-curve", "--protocol", "bb84", "--L-max", "120", "--points", "3", "--with-mc", "--seed", "7",
        "--packets", "400", "--photons-per-packet", "1000"];
    let first = stdout(&uwqkd(&args));
    let second = stdout(&uwqkd(&args));
    assert_eq!(body(&first), body(&second));
    assert!(first.contains("# seed: 7"));
    let (_, rows) = rows(&first);
    for r in rows {
        let (analytic, mc, se) = (num(&r[1]), num(&r[4]), num(&r[5]));
        assert!((analytic - mc).abs() <= 3.0 * se.max(1e-4), "{r:?}");
    }
}

#[test]
fn sarg04_max_distance() {
    let o = uwqkd(&["max-distance", "--protocol", "sarg04", "--water", "clear", "--scenario", "1", "--d1", "0.3",
        "--threshold", "0.149"]);
    assert!(o.status.success());
    let (header, rows) = rows(&stdout(&o));
    assert_eq!(header[0], "L_max_m");
    let l = num(&rows[0][0]);
    assert!((l - 163.43).abs() / 163.43 < 0.02, "{l}");
}

#[test]
fn bb84_turbid_scenario5() {
    let o = uwqkd(&["max-distance", "--protocol", "bb84", "--water", "turbid", "--scenario", "5", "--d1", "0.3"]);
    let (_, rows) = rows(&stdout(&o));
    let l = num(&rows[0][0]);
    assert!((l - 0.18).abs() / 0.18 < 0.25, "{l}");
}

#[test]
fn exit_codes() {
    let no_crossing = uwqkd(&["max-distance", "--threshold", "0.02"]);
    assert_eq!(no_crossing.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&no_crossing.stderr).contains("no threshold crossing"));

    assert_eq!(uwqkd(&["max-distance", "--bogus"]).status.code(), Some(2));
    assert_eq!(uwqkd(&["qber-curve", "--water", "muddy"]).status.code(), Some(2));
    assert_eq!(uwqkd(&["qber-curve", "--scenario", "9"]).status.code(), Some(2));
    assert_eq!(uwqkd(&["qber-curve", "--d1", "0.07"]).status.code(), Some(2));
    assert_eq!(uwqkd(&["qber-curve", "--x-fraction", "1.5", "--protocol", "bbm92"]).status.code(), Some(3));
    assert_eq!(uwqkd(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("link.toml");
    fs::write(&cfg, "[system]\ne_det = 0.01\ndivergence_deg = 6.0\n").unwrap();
    let o = uwqkd(&["qber-curve", "--points", "1", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let (_, rows) = rows(&stdout(&o));
    assert!((num(&rows[0][1]) - 0.01).abs() < 1e-4);

    fs::write(&cfg, "[system]\nmu = -1.0\n").unwrap();
    assert_eq!(uwqkd(&["qber-curve", "--config", cfg.to_str().unwrap()]).status.code(), Some(3));
    fs::write(&cfg, "[system]\nnot_a_field = 1\n").unwrap();
    assert_eq!(uwqkd(&["qber-curve", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corr.csv");
    let o = uwqkd(&["correlation", "--water", "turbid", "--L-max", "10", "--points", "11", "--out",
        path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let (_, rows) = rows(&fs::read_to_string(&path).unwrap());
    assert_eq!(num(&rows[0][3]), 1.0);
    assert!(num(&rows[10][3]) < 0.05);
}

#[test]
fn source_sweep_is_non_increasing() {
    let o = uwqkd(&["source-sweep", "--water", "clear", "--scenario", "1", "--d1", "0.3"]);
    assert!(o.status.success());
    let (header, rows) = rows(&stdout(&o));
    assert_eq!(header[..2], ["x_fraction", "L_max_m"]);
    assert_eq!(rows.len(), 11);
    let l: Vec<f64> = rows.iter().map(|r| num(&r[1])).collect();
    assert!(l.windows(2).all(|w| w[1] <= w[0]), "{l:?}");
}

#[test]
fn validate_reports_every_cell() {
    let o = uwqkd(&["validate", "--packets", "2000", "--photons-per-packet", "1000", "--seed", "3"]);
    let out = stdout(&o);
    let (header, rows) = rows(&out);
    assert_eq!(header.last().unwrap(), "status");
    assert_eq!(rows.len(), 72);
    let failed = rows.iter().filter(|r| r[8] == "FAIL").count();
    assert_eq!(o.status.code(), Some(if failed == 0 { 0 } else { 4 }));
}
