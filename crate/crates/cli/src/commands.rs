//! Subcommand implementations.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use polqkd::channel::{estimate_dgd, fit_arc, pmd_parameter, sweep_trajectory, FiberChannel, PmdVector};
use polqkd::emitter::{fit_g2_cw, pulsed_g2, pulsed_g2_with_window};
use polqkd::keyrate::{
    gllp_asymptotic_rate, rate_vs_loss_curve, reconstruct_tally, secure_key_length, AuditPoint, GllpInputs, KeyResult,
    KeyScenario, KeyTally, QberModel, ReconstructedSession, SecurityParams,
};
use polqkd::polarization::{stokes_of_str, BasisAssignment, PhysicalBasis, StokesVector};
use polqkd::protocol::{expected_rates, run_session, ExpectedRates, SessionStatus, SiftResult, WindowStat};
use polqkd::Error;
use serde::{Deserialize, Serialize};

use crate::io;
use crate::keyinput::KeyAnalysisInput;
use crate::scenario::Scenario;
use crate::{Cli, Command, CurveArgs, Format, G2Command, KeyrateArgs, OptimizeArgs, PdetMode, PmdCommand, QberMode};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a.pulses, a.series.as_deref()),
        Command::Keyrate(a) => keyrate(cli, a),
        Command::Pmd(c) => pmd(cli, c),
        Command::G2(c) => g2(cli, c),
        Command::Optimize(a) => optimize(cli, a),
        Command::RateCurve(a) => rate_curve(cli, a),
    }
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Error::InvalidInput(msg.into()).into()
}

fn emit(cli: &Cli, bytes: &[u8]) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            Ok(out.flush()?)
        }
    }
}

fn require_scenario(cli: &Cli) -> Result<Scenario> {
    match &cli.scenario {
        Some(s) => Scenario::load(s),
        None => Err(invalid("--scenario is required for this command")),
    }
}

/// Report written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub scenario: String,
    pub seed: u64,
    pub n_pulses: u64,
    pub rep_rate: f64,
    pub p_z: f64,
    pub bob_split: f64,
    pub p_m: f64,
    pub status: SessionStatus,
    pub result: SiftResult,
    pub expected: ExpectedRates,
    pub windows: Vec<WindowStat>,
}

fn simulate(cli: &Cli, pulses: Option<u64>, series: Option<&Path>) -> Result<()> {
    let seed = cli.seed.ok_or_else(|| invalid("--seed is required for simulate"))?;
    let sc = require_scenario(cli)?;
    let n = pulses
        .or_else(|| sc.pulses())
        .ok_or_else(|| invalid("scenario gives neither n_pulses nor duration_s; pass --pulses"))?;
    if n == 0 {
        bail!(invalid("n_pulses must be >= 1"));
    }
    let out = run_session(&sc.session, n, seed)?;
    let report = SessionReport {
        scenario: sc.name.clone(),
        seed,
        n_pulses: n,
        rep_rate: sc.session.device.rep_rate,
        p_z: sc.session.alice.p_key,
        bob_split: sc.session.bob_split,
        p_m: sc.session.photons.p_multi(),
        status: out.status,
        result: out.result,
        expected: expected_rates(&sc.session)?,
        windows: out.windows,
    };
    if let Some(path) = series {
        std::fs::write(path, io::to_csv(&report.windows)?).with_context(|| format!("writing {}", path.display()))?;
    }
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => emit(cli, &io::to_json(&report)?),
        Format::Csv => emit(cli, &io::to_csv(&report.windows)?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentReport {
    pub key_basis: Option<PhysicalBasis>,
    pub tally: KeyTally<f64>,
    pub result: KeyResult<f64>,
    pub gllp_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyReport {
    pub source: String,
    pub p_det_mode: String,
    pub p_det: f64,
    pub p_m: f64,
    pub security: SecurityParams<f64>,
    pub assignments: Vec<AssignmentReport>,
}

#[derive(Debug, Serialize)]
struct KeyRow {
    key_basis: String,
    n_z: f64,
    n_x: f64,
    e_z: f64,
    e_x: f64,
    length_bits: u64,
    rate_bps: f64,
    gllp_bps: f64,
    status: String,
}

fn assess(
    tally: KeyTally<f64>,
    security: &SecurityParams<f64>,
    rep_rate: f64,
    key_basis: Option<PhysicalBasis>,
) -> Result<AssignmentReport> {
    let result = secure_key_length(&tally, security)?;
    let gllp_bps = if tally.p_det > 0.0 {
        gllp_asymptotic_rate(&GllpInputs {
            rep_rate,
            p_det: tally.p_det,
            p_m: tally.p_m,
            p_key: tally.p_key,
            p_check: tally.p_check,
            sift_factor: tally.n_key / (tally.duration_s * rep_rate * tally.p_det),
            e_key: tally.e_key,
            e_check: tally.e_check,
            f_ec: security.f_ec,
        })?
    } else {
        0.0
    };
    Ok(AssignmentReport { key_basis, tally, result, gllp_bps })
}

/// Key analysis of a reconstructed session under both basis assignments.
pub fn reconstructed_report(
    session: &ReconstructedSession,
    rep_rate: f64,
    analytic_p_det: f64,
    p_m: f64,
    mode: PdetMode,
    security: &SecurityParams<f64>,
) -> Result<KeyReport> {
    let p_det = match mode {
        PdetMode::Analytic => analytic_p_det,
        PdetMode::Empirical => {
            let b = session.bob_split;
            let sift = session.p_key * b + (1.0 - session.p_key) * (1.0 - b);
            session.sifted_bps / (rep_rate * sift)
        }
    };
    let assignments = [PhysicalBasis::Da, PhysicalBasis::Lr]
        .into_iter()
        .map(|k| {
            let s = ReconstructedSession { key_basis: k, ..*session };
            assess(reconstruct_tally(&s, p_det, p_m)?, security, rep_rate, Some(k))
        })
        .collect::<Result<_>>()?;
    Ok(KeyReport {
        source: "reconstructed".into(),
        p_det_mode: mode_name(mode).into(),
        p_det,
        p_m,
        security: *security,
        assignments,
    })
}

fn mode_name(mode: PdetMode) -> &'static str {
    match mode {
        PdetMode::Analytic => "analytic",
        PdetMode::Empirical => "empirical",
    }
}

fn key_from_input(input: &KeyAnalysisInput, args: &KeyrateArgs) -> Result<KeyReport> {
    input.device().validate()?;
    let security = input.security();
    security.validate()?;
    let p_m = input.p_m()?;
    match (&input.session, &input.tally) {
        (Some(s), None) => {
            let mut s = *s;
            if let Some(p) = args.p_z {
                s.p_key = p;
            }
            reconstructed_report(&s, input.nu_rep, input.analytic_p_det()?, p_m, args.p_det, &security)
        }
        (None, Some(t)) => {
            if args.p_det == PdetMode::Empirical {
                bail!(invalid("empirical p_det needs a session summary, not explicit counts"));
            }
            let p_z = args.p_z.unwrap_or(t.p_z);
            let p_det = input.analytic_p_det()?;
            let tally = KeyTally {
                n_key: t.n_z,
                n_check: t.n_x,
                e_key: t.e_z,
                e_check: t.e_x,
                p_key: p_z,
                p_check: 1.0 - p_z,
                p_det,
                p_m,
                duration_s: t.duration_s,
            };
            Ok(KeyReport {
                source: "tally".into(),
                p_det_mode: "analytic".into(),
                p_det,
                p_m,
                security,
                assignments: vec![assess(tally, &security, input.nu_rep, None)?],
            })
        }
        _ => bail!(invalid("key-analysis input needs exactly one of `session` or `tally`")),
    }
}

fn key_from_session(report: &SessionReport, security: &SecurityParams<f64>, args: &KeyrateArgs) -> Result<KeyReport> {
    let duration = report.result.pulses as f64 / report.rep_rate;
    let p_det = match args.p_det {
        PdetMode::Analytic => report.expected.p_det,
        PdetMode::Empirical => report.result.p_det,
    };
    let p_z = args.p_z.unwrap_or(report.p_z);
    let t = &report.result.tally;
    let assignments = [PhysicalBasis::Da, PhysicalBasis::Lr]
        .into_iter()
        .map(|k| {
            let a = BasisAssignment::new(k);
            let r = t.result(a);
            let tally = KeyTally {
                n_key: r.n_key as f64,
                n_check: r.n_check as f64,
                e_key: r.e_key,
                e_check: r.e_check,
                p_key: p_z,
                p_check: 1.0 - p_z,
                p_det,
                p_m: report.p_m,
                duration_s: duration,
            };
            assess(tally, security, report.rep_rate, Some(k))
        })
        .collect::<Result<_>>()?;
    Ok(KeyReport {
        source: "session".into(),
        p_det_mode: mode_name(args.p_det).into(),
        p_det,
        p_m: report.p_m,
        security: *security,
        assignments,
    })
}

/// Key analysis of a scenario: rebuilt counts when a sifted rate was
/// observed, expected counts otherwise.
pub fn key_from_scenario(sc: &Scenario, p_z: Option<f64>, mode: PdetMode) -> Result<KeyReport> {
    let duration = sc.duration().ok_or_else(|| invalid("scenario gives neither duration_s nor n_pulses"))?;
    let c = &sc.session;
    let p_m = c.photons.p_multi();
    let p_key = p_z.unwrap_or(c.alice.p_key);
    match sc.observed {
        Some(o) if o.sifted_bps.is_some() => {
            let session = ReconstructedSession {
                sifted_bps: o.sifted_bps.unwrap_or_default(),
                duration_s: duration,
                qber_da: o.qber_da,
                qber_lr: o.qber_lr,
                p_key,
                bob_split: c.bob_split,
                key_basis: c.assignment.key,
            };
            let analytic =
                polqkd::keyrate::detection_probability(&c.device, c.channel.loss_db, c.placement, &c.photons)?;
            reconstructed_report(&session, c.device.rep_rate, analytic, p_m, mode, &sc.security)
        }
        observed => {
            if mode == PdetMode::Empirical {
                bail!(invalid("empirical p_det needs an observed sifted rate"));
            }
            let qber = observed.map_or(QberModel::Analytic, |o| o.qber_model());
            let base =
                KeyScenario { session: c.clone(), security: sc.security, duration_s: duration, qber }.with_p_key(p_key);
            let mut p_det = 0.0;
            let assignments = [PhysicalBasis::Da, PhysicalBasis::Lr]
                .into_iter()
                .map(|k| {
                    let mut s = base.clone();
                    s.session.assignment = BasisAssignment::new(k);
                    let tally = s.tally()?;
                    p_det = tally.p_det;
                    let mut rep = assess(tally, &sc.security, c.device.rep_rate, Some(k))?;
                    rep.gllp_bps = s.gllp()?;
                    Ok(rep)
                })
                .collect::<Result<_>>()?;
            Ok(KeyReport {
                source: "model".into(),
                p_det_mode: "analytic".into(),
                p_det,
                p_m,
                security: sc.security,
                assignments,
            })
        }
    }
}

fn keyrate(cli: &Cli, args: &KeyrateArgs) -> Result<()> {
    let report = if let Some(path) = &args.input {
        let input: KeyAnalysisInput =
            serde_json::from_str(&io::read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        key_from_input(&input, args)?
    } else if let Some(path) = &args.session {
        let session: SessionReport =
            serde_json::from_str(&io::read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
        let security = match &cli.scenario {
            Some(s) => Scenario::load(s)?.security,
            None => SecurityParams::reference(),
        };
        key_from_session(&session, &security, args)?
    } else {
        key_from_scenario(&require_scenario(cli)?, args.p_z, args.p_det)?
    };
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => emit(cli, &io::to_json(&report)?),
        Format::Csv => {
            let rows: Vec<KeyRow> = report
                .assignments
                .iter()
                .map(|a| KeyRow {
                    key_basis: a.key_basis.map_or_else(|| "-".into(), |b| b.to_string()),
                    n_z: a.tally.n_key,
                    n_x: a.tally.n_check,
                    e_z: a.tally.e_key,
                    e_x: a.tally.e_check,
                    length_bits: a.result.length_bits,
                    rate_bps: a.result.rate_bps,
                    gllp_bps: a.gllp_bps,
                    status: serde_json::to_value(a.result.status)
                        .ok()
                        .and_then(|v| v.as_str().map(String::from))
                        .unwrap_or_default(),
                })
                .collect();
            emit(cli, &io::to_csv(&rows)?)
        }
    }
}

fn parse_stokes(spec: &str) -> Result<StokesVector<f64>> {
    if spec.contains(',') {
        let parts: Vec<f64> = spec
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| invalid(format!("bad Stokes component {p:?}: {e}"))))
            .collect::<Result<_>>()?;
        if parts.len() != 3 {
            bail!(invalid(format!("Stokes vector needs 3 components, got {}", parts.len())));
        }
        Ok(StokesVector::new(parts[0], parts[1], parts[2]).unit()?)
    } else {
        Ok(stokes_of_str(spec)?)
    }
}

#[derive(Debug, Serialize)]
struct ArcReport {
    axis: StokesVector<f64>,
    cone_angle_deg: f64,
    rotation_angle_deg: f64,
    central_angle_deg: f64,
    residual_deg: f64,
    degenerate: bool,
    span_nm: f64,
    center_nm: f64,
    dgd_ps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pmd_param: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    dgd_ps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pmd_param: Option<f64>,
}

fn pmd(cli: &Cli, cmd: &PmdCommand) -> Result<()> {
    match cmd {
        PmdCommand::Sweep(a) => {
            let channel = match (a.dgd_ps, &cli.scenario) {
                (Some(dgd), _) => {
                    FiberChannel::first_order(PmdVector::new(parse_stokes(&a.axis)?, dgd)?, 0.0, 1.0, a.reference_nm)?
                }
                (None, Some(_)) => require_scenario(cli)?.session.channel,
                (None, None) => bail!(invalid("give --dgd-ps or --scenario")),
            };
            let points = sweep_trajectory(&channel, &parse_stokes(&a.state)?, a.start_nm, a.end_nm, a.points)?;
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => emit(cli, &io::trajectory_csv(&points)?),
                Format::Json => emit(cli, &io::to_json(&points)?),
            }
        }
        PmdCommand::Fit(a) => {
            let points = io::parse_trajectory(&io::read_text(&a.input)?)
                .with_context(|| format!("parsing {}", a.input.display()))?;
            let fit = fit_arc(&points)?;
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.wavelength), hi.max(p.wavelength)));
            let span = hi - lo;
            let center = 0.5 * (lo + hi);
            let dgd = if span > 0.0 { estimate_dgd(fit.rotation_angle, span, center)? } else { 0.0 };
            let report = ArcReport {
                axis: fit.axis,
                cone_angle_deg: fit.cone_angle.to_degrees(),
                rotation_angle_deg: fit.rotation_angle.to_degrees(),
                central_angle_deg: fit.central_angle.to_degrees(),
                residual_deg: fit.residual.to_degrees(),
                degenerate: fit.degenerate,
                span_nm: span,
                center_nm: center,
                dgd_ps: dgd,
                pmd_param: a.length_km.map(|l| pmd_parameter(dgd, l)).transpose()?,
            };
            emit(cli, &io::to_json(&report)?)
        }
        PmdCommand::Estimate(a) => {
            let dgd = estimate_dgd(a.angle_deg.to_radians(), a.span_nm, a.center_nm)?;
            let report =
                EstimateReport { dgd_ps: dgd, pmd_param: a.length_km.map(|l| pmd_parameter(dgd, l)).transpose()? };
            emit(cli, &io::to_json(&report)?)
        }
    }
}

fn g2(cli: &Cli, cmd: &G2Command) -> Result<()> {
    let bytes = match cmd {
        G2Command::FitCw { input } => {
            let hist =
                io::parse_histogram(&io::read_text(input)?).with_context(|| format!("parsing {}", input.display()))?;
            io::to_json(&fit_g2_cw(&hist)?)?
        }
        G2Command::Pulsed { input, rep_period_ns, window_ns } => {
            let hist =
                io::parse_histogram(&io::read_text(input)?).with_context(|| format!("parsing {}", input.display()))?;
            let est = match window_ns {
                Some(w) => pulsed_g2_with_window(&hist, *rep_period_ns, *w)?,
                None => pulsed_g2(&hist, *rep_period_ns)?,
            };
            io::to_json(&est)?
        }
    };
    emit(cli, &bytes)
}

fn key_scenario(sc: &Scenario, duration: Option<f64>, qber: QberMode) -> Result<KeyScenario> {
    let duration_s = duration
        .or_else(|| sc.duration())
        .ok_or_else(|| invalid("no session duration: pass --duration-s or set duration_s"))?;
    if !(duration_s > 0.0) {
        bail!(invalid("duration must be > 0 s"));
    }
    let qber = match qber {
        QberMode::Analytic => QberModel::Analytic,
        QberMode::Observed => {
            sc.observed.map(|o| o.qber_model()).ok_or_else(|| invalid("scenario has no [observed] QBER pair"))?
        }
    };
    Ok(KeyScenario { session: sc.session.clone(), security: sc.security, duration_s, qber })
}

#[derive(Debug, Serialize)]
struct OptimizeReport {
    scenario: String,
    duration_s: f64,
    p_key: f64,
    rate_bps: f64,
    balanced_rate_bps: f64,
    status: polqkd::keyrate::OptimizationStatus,
    method: polqkd::keyrate::SearchMethod,
    unimodal: bool,
    evaluations: usize,
}

fn optimize(cli: &Cli, args: &OptimizeArgs) -> Result<()> {
    let sc = require_scenario(cli)?;
    let ks = key_scenario(&sc, args.duration_s, args.qber)?;
    let opt = ks.optimize()?;
    let mut audit: Vec<AuditPoint> = opt.audit.clone();
    audit.sort_by(|a, b| a.p_key.total_cmp(&b.p_key));
    if let Some(path) = &args.audit {
        std::fs::write(path, io::to_csv(&audit)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let report = OptimizeReport {
        scenario: sc.name.clone(),
        duration_s: ks.duration_s,
        p_key: opt.p_key,
        rate_bps: opt.rate,
        balanced_rate_bps: ks.with_p_key(0.5).finite()?.rate_bps,
        status: opt.status,
        method: opt.method,
        unimodal: opt.unimodal,
        evaluations: opt.audit.len(),
    };
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => emit(cli, &io::to_json(&report)?),
        Format::Csv => emit(cli, &io::to_csv(&audit)?),
    }
}

/// Parses `start:end:step` or a comma-separated list of losses in dB.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| invalid(format!("bad loss value {s:?}: {e}")));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !(step > 0.0) || end < start {
                bail!(invalid("loss grid needs step > 0 and end >= start"));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + i as f64 * step).collect()
        }
        [_] => spec.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => bail!(invalid(format!("unrecognized loss grid {spec:?}"))),
    };
    if grid.is_empty() {
        bail!(invalid("loss grid is empty"));
    }
    Ok(grid)
}

fn rate_curve(cli: &Cli, args: &CurveArgs) -> Result<()> {
    let sc = require_scenario(cli)?;
    let mut ks = key_scenario(&sc, args.duration_s, args.qber)?;
    if let Some(p) = args.p_z {
        ks.session.alice.validate()?;
        ks = ks.with_p_key(p);
        ks.session.alice.validate()?;
    }
    let curve = rate_vs_loss_curve(&ks, &parse_grid(&args.losses)?)?;
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => emit(cli, &io::to_csv(&curve)?),
        Format::Json => emit(cli, &io::to_json(&curve)?),
    }
}
