use std::path::Path;
use std::process::{Command, Output};

use polqkd::emitter::{synthetic_cw_histogram, synthetic_pulsed_histogram, G2Model, PulsedTrain};
use polqkd_cli::commands::SessionReport;
use polqkd_cli::io;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn polqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polqkd")).args(args).output().expect("spawn polqkd")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = polqkd(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn code(args: &[&str]) -> i32 {
    polqkd(args).status.code().expect("exit code")
}

fn json(args: &[&str]) -> Value {
    serde_json::from_slice(&ok(args)).expect("json output")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_deployed_orders_basis_errors() {
    let out = ok(&["simulate", "--scenario", "deployed-3p5km", "--seed", "7", "--pulses", "3000000"]);
    let report: SessionReport = serde_json::from_slice(&out).unwrap();
    assert!(report.result.qber_da < report.result.qber_lr);
    assert!(report.expected.qber_da < report.expected.qber_lr);
    assert_eq!(report.n_pulses, 3_000_000);
}

#[test]
fn simulate_requires_seed_and_pulses() {
    assert_eq!(code(&["simulate", "--scenario", "deployed-3p5km"]), 1);
    assert_eq!(code(&["simulate", "--scenario", "deployed-3p5km", "--seed", "1", "--pulses", "0"]), 1);
}

#[test]
fn simulate_series_matches_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let args = ["simulate", "--scenario", "spool-32p5km", "--seed", "3", "--pulses", "4000000"];
    let mut with_series = args.to_vec();
    with_series.extend(["--series", path(&series)]);
    ok(&with_series);
    let mut csv = args.to_vec();
    csv.extend(["--format", "csv"]);
    assert_eq!(std::fs::read(&series).unwrap(), ok(&csv));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["keyrate", "--scenario", "/no/such/file.toml"]), 1);
    assert_eq!(code(&["keyrate", "--scenario", "not-a-bundled-name"]), 1);
    assert_eq!(code(&["pmd", "estimate", "--angle-deg", "45", "--span-nm", "0"]), 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nunknown_key = 3\n").unwrap();
    assert_eq!(code(&["keyrate", "--scenario", path(&bad)]), 1);
}

#[test]
fn malformed_csv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.csv");
    std::fs::write(&f, "wavelength_nm,s1,s2,s3\n1310,0,0,1\n1311,zero,0,1\n").unwrap();
    let out = polqkd(&["pmd", "fit", "--input", path(&f)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn sweep_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for dgd in [0.05, 0.3, 1.2] {
        let f = dir.path().join("sweep.csv");
        let d = dgd.to_string();
        ok(&["pmd", "sweep", "--dgd-ps", &d, "--start-nm", "1309", "--end-nm", "1311", "--out", path(&f)]);
        let fit = json(&["pmd", "fit", "--input", path(&f), "--length-km", "4"]);
        let got = fit["dgd_ps"].as_f64().unwrap();
        assert!((got / dgd - 1.0).abs() < 0.01, "dgd {dgd}: {got}");
        assert!((fit["pmd_param"].as_f64().unwrap() - got / 2.0).abs() < 1e-12);
    }
}

#[test]
fn aligned_axis_splits_states_into_small_and_large_arcs() {
    let dir = tempfile::tempdir().unwrap();
    let mut angles = Vec::new();
    for state in ["D", "A", "L", "R"] {
        let f = dir.path().join(format!("{state}.csv"));
        ok(&["pmd", "sweep", "--dgd-ps", "0.2", "--axis", "0.2,1,0", "--state", state, "--out", path(&f)]);
        angles.push(json(&["pmd", "fit", "--input", path(&f)])["central_angle_deg"].as_f64().unwrap());
    }
    assert!(angles[0] < 20.0 && angles[1] < 20.0, "{angles:?}");
    assert!(angles[2] > 3.0 * angles[0] && angles[3] > 3.0 * angles[1], "{angles:?}");
}

#[test]
fn fit_needs_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("two.csv");
    std::fs::write(&f, "wavelength_nm,s1,s2,s3\n1310,0,0,1\n1311,0,0.1,0.995\n").unwrap();
    assert_eq!(code(&["pmd", "fit", "--input", path(&f)]), 1);
}

#[test]
fn g2_on_synthetic_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = G2Model { a: 0.3, tau1: 1.5, tau2: 40.0, g2_zero: 0.28, uncertainty: 0.0 };
    let cw = dir.path().join("cw.csv");
    std::fs::write(&cw, io::histogram_csv(&synthetic_cw_histogram(&model, 2000.0, 150.0, 0.25, &mut rng)).unwrap())
        .unwrap();
    let fit = json(&["g2", "fit-cw", "--input", path(&cw)]);
    let (g, s) = (fit["model"]["g2_zero"].as_f64().unwrap(), fit["model"]["uncertainty"].as_f64().unwrap());
    assert!((g - 0.28).abs() < 2.0 * s + 1e-3, "{g} ± {s}");

    let train = PulsedTrain {
        rep_period_ns: 12.5,
        peak_decay_ns: 1.0,
        side_peak_counts: 20000.0,
        ratio: 0.323,
        side_peaks_each_side: 8,
        bin_ns: 0.1,
    };
    let pulsed = dir.path().join("pulsed.csv");
    std::fs::write(&pulsed, io::histogram_csv(&synthetic_pulsed_histogram(&train, &mut rng)).unwrap()).unwrap();
    let est = json(&["g2", "pulsed", "--input", path(&pulsed), "--rep-period-ns", "12.5"]);
    let (g, s) = (est["g2_zero"].as_f64().unwrap(), est["uncertainty"].as_f64().unwrap());
    assert!((g - 0.323).abs() < 3.0 * s, "{g} ± {s}");

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&["g2", "fit-cw", "--input", path(&empty)]), 1);
    assert_eq!(code(&["g2", "pulsed", "--input", path(&empty), "--rep-period-ns", "12.5"]), 1);
}

#[test]
fn keyrate_reports_both_assignments() {
    let report = json(&["keyrate", "--scenario", "deployed-3p5km"]);
    assert_eq!(report["source"], "reconstructed");
    let a = report["assignments"].as_array().unwrap();
    assert_eq!(a.len(), 2);
    assert_eq!(a[0]["key_basis"], "DA");
    assert_eq!(a[1]["key_basis"], "LR");
    let da = a[0]["result"]["rate_bps"].as_f64().unwrap();
    let lr = a[1]["result"]["rate_bps"].as_f64().unwrap();
    assert!(da > lr && lr > 0.0);
}

#[test]
fn keyrate_zero_count_tally() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("tally.json");
    let input = serde_json::json!({
        "nu_rep": 80e6, "r_c": 0.4, "eta_det": 0.75, "p_dark": 1e-8, "e0": 0.01,
        "l_c": 4.0, "l_a": 2.0, "l_b": 3.0, "eps_sec": 1e-12, "eps_cor": 1e-12, "f": 1.16,
        "g2_zero": 0.323,
        "tally": { "n_z": 0.0, "n_x": 0.0, "e_z": 0.0, "e_x": 0.0, "p_z": 0.5, "duration_s": 100.0 }
    });
    std::fs::write(&f, input.to_string()).unwrap();
    let report = json(&["keyrate", "--input", path(&f)]);
    let r = &report["assignments"][0]["result"];
    assert_eq!(r["length_bits"], 0);
    assert_eq!(r["status"], "no-counts");
}

#[test]
fn keyrate_from_session_report() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("session.json");
    ok(&["simulate", "--scenario", "deployed-3p5km", "--seed", "5", "--pulses", "2000000", "--out", path(&s)]);
    let report = json(&["keyrate", "--session", path(&s)]);
    assert_eq!(report["source"], "session");
    assert_eq!(report["assignments"].as_array().unwrap().len(), 2);
}

#[test]
fn optimizer_backs_off_for_short_sessions() {
    let long = json(&["optimize", "--scenario", "deployed-3p5km"]);
    let short = json(&["optimize", "--scenario", "deployed-3p5km", "--duration-s", "1"]);
    assert!(short["p_key"].as_f64().unwrap() < long["p_key"].as_f64().unwrap());
}

#[test]
fn optimizer_audit_lists_every_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.csv");
    let report = json(&["optimize", "--scenario", "spool-32p5km", "--audit", path(&audit)]);
    let rows = std::fs::read_to_string(&audit).unwrap().lines().count() - 1;
    assert_eq!(rows as u64, report["evaluations"].as_u64().unwrap());
}

#[test]
fn rate_curve_grid() {
    let out = String::from_utf8(ok(&["rate-curve", "--scenario", "deployed-3p5km", "--losses", "0:15:0.5"])).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "loss_db,finite_bps,gllp_bps");
    assert_eq!(lines.len(), 32);
    assert_eq!(code(&["rate-curve", "--scenario", "deployed-3p5km", "--losses", "5:1:1"]), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    ok(&["pmd", "sweep", "--dgd-ps", "0.117", "--out", path(&sweep)]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = G2Model { a: 0.3, tau1: 1.5, tau2: 40.0, g2_zero: 0.28, uncertainty: 0.0 };
    let cw = dir.path().join("cw.csv");
    std::fs::write(&cw, io::histogram_csv(&synthetic_cw_histogram(&model, 500.0, 100.0, 0.5, &mut rng)).unwrap())
        .unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["simulate", "--scenario", "deployed-3p5km", "--seed", "9", "--pulses", "1000000"],
        vec!["keyrate", "--scenario", "spool-32p5km"],
        vec!["pmd", "sweep", "--scenario", "deployed-3p5km"],
        vec!["pmd", "fit", "--input", path(&sweep)],
        vec!["pmd", "estimate", "--angle-deg", "51.5", "--span-nm", "7"],
        vec!["g2", "fit-cw", "--input", path(&cw)],
        vec!["optimize", "--scenario", "deployed-3p5km"],
        vec!["rate-curve", "--scenario", "spool-32p5km"],
    ];
    for args in runs {
        assert_eq!(ok(&args), ok(&args), "{args:?}");
    }
}
