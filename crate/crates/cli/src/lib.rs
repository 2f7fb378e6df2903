//! Command-line front-end: scenario loading, subcommands and report output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod io;
pub mod keyinput;
pub mod scenario;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "polqkd", version, about = "Polarization BB84 simulation and key-rate analysis")]
pub struct Cli {
    /// Scenario TOML file, or the name of a bundled scenario.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Random seed; required by `simulate`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo session: sifted tallies and windowed time series.
    Simulate(SimulateArgs),
    /// Finite-key secure length from a scenario, a tally file or a session report.
    Keyrate(KeyrateArgs),
    /// PMD trajectories, arc fits and DGD estimates.
    #[command(subcommand)]
    Pmd(PmdCommand),
    /// Second-order correlation estimates.
    #[command(subcommand)]
    G2(G2Command),
    /// Key-basis probability maximizing the finite-key rate.
    Optimize(OptimizeArgs),
    /// Finite-key and GLLP rates over a channel-loss grid.
    RateCurve(CurveArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Overrides the scenario's pulse count.
    #[arg(long)]
    pub pulses: Option<u64>,
    /// Also write the window time series as CSV to this path.
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PdetMode {
    Analytic,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QberMode {
    /// Closed-form per-basis QBER of the scenario.
    Analytic,
    /// The scenario's observed QBER pair.
    Observed,
}

#[derive(Debug, Args)]
pub struct KeyrateArgs {
    /// Key-analysis JSON (device figures plus a tally or session summary).
    #[arg(long, conflicts_with = "session")]
    pub input: Option<PathBuf>,
    /// Session report written by `simulate`.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Key-basis probability, overriding the input's.
    #[arg(long)]
    pub p_z: Option<f64>,
    /// Detection probability used in the multi-photon factors.
    #[arg(long, value_enum, default_value = "analytic")]
    pub p_det: PdetMode,
}

#[derive(Debug, Subcommand)]
pub enum PmdCommand {
    /// Output polarization over a wavelength sweep (CSV: wavelength_nm, s1, s2, s3).
    Sweep(SweepArgs),
    /// Circle fit of a trajectory CSV.
    Fit(FitArgs),
    /// DGD and PMD parameter from an arc angle.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Single-segment DGD in ps; the scenario channel is used when omitted.
    #[arg(long)]
    pub dgd_ps: Option<f64>,
    /// Segment axis: state label or `s1,s2,s3`.
    #[arg(long, default_value = "D")]
    pub axis: String,
    /// Input state: label or `s1,s2,s3`.
    #[arg(long, default_value = "L")]
    pub state: String,
    #[arg(long, default_value_t = 1306.5)]
    pub start_nm: f64,
    #[arg(long, default_value_t = 1313.5)]
    pub end_nm: f64,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Reference wavelength of a single-segment channel.
    #[arg(long, default_value_t = 1310.0)]
    pub reference_nm: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Fiber length for the PMD parameter.
    #[arg(long)]
    pub length_km: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub angle_deg: f64,
    #[arg(long)]
    pub span_nm: f64,
    #[arg(long, default_value_t = 1310.0)]
    pub center_nm: f64,
    #[arg(long)]
    pub length_km: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum G2Command {
    /// Three-level fit of a CW histogram (CSV: tau_ns, counts).
    FitCw {
        #[arg(long)]
        input: PathBuf,
    },
    /// Peak-ratio estimate from a pulsed histogram.
    Pulsed {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rep_period_ns: f64,
        /// Integration half-width; half the period when omitted.
        #[arg(long)]
        window_ns: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Session length in seconds, overriding the scenario's.
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, value_enum, default_value = "analytic")]
    pub qber: QberMode,
    /// Write every evaluated (p_key, rate) pair as CSV to this path.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Loss grid in dB: `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "0:15:0.5")]
    pub losses: String,
    #[arg(long)]
    pub p_z: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, value_enum, default_value = "analytic")]
    pub qber: QberMode,
}

/// Exit status for a failed run: 1 for invalid input, 2 for runtime failures.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<polqkd::Error>() {
            return match e {
                polqkd::Error::NonConvergence { .. } => 2,
                _ => 1,
            };
        }
        if cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return if e.kind() == std::io::ErrorKind::NotFound { 1 } else { 2 };
        }
    }
    2
}

/// Parses arguments, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
