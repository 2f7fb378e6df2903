//! Scenario files: device, channel, emitter and basis settings in TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use polqkd::channel::{synthesize_channel, FiberChannel, FiberSegment};
use polqkd::emitter::{EmitterSpectrum, PhotonStatistics, SpectralShape};
use polqkd::keyrate::{QberModel, SecurityParams};
use polqkd::polarization::{stokes_of_str, BasisAssignment, PhysicalBasis, StokesVector};
use polqkd::protocol::{AliceSettings, DeviceParams, DoubleClickPolicy, LossPlacement, Pattern, SessionConfig};
use serde::Deserialize;

/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED: [(&str, &str); 2] = [
    ("deployed-3p5km", include_str!("../../../scenarios/deployed-3p5km.toml")),
    ("spool-32p5km", include_str!("../../../scenarios/spool-32p5km.toml")),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    n_pulses: Option<u64>,
    duration_s: Option<f64>,
    #[serde(default = "default_window")]
    window_s: f64,
    device: DeviceSection,
    channel: ChannelSection,
    emitter: EmitterSection,
    alice: AliceSection,
    #[serde(default)]
    bob: BobSection,
    #[serde(default)]
    security: SecuritySection,
    observed: Option<Observed>,
}

fn default_window() -> f64 {
    20.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceSection {
    nu_rep: f64,
    r_c: f64,
    eta_det: f64,
    p_dark: f64,
    e0: f64,
    l_a: f64,
    l_b: f64,
    #[serde(default)]
    loss_placement: LossPlacement,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum AxisSpec {
    Label(String),
    Vector([f64; 3]),
}

impl AxisSpec {
    fn resolve(&self) -> Result<StokesVector<f64>> {
        Ok(match self {
            Self::Label(l) => stokes_of_str(l)?,
            Self::Vector(v) => StokesVector::from_array(*v).unit()?,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentSpec {
    axis: AxisSpec,
    dgd_ps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSpec {
    pmd_param: f64,
    n_segments: usize,
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelSection {
    l_c: f64,
    length_km: f64,
    reference_nm: Option<f64>,
    segments: Option<Vec<SegmentSpec>>,
    synthesize: Option<SynthSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmitterSection {
    center_nm: f64,
    fwhm_nm: f64,
    #[serde(default)]
    shape: SpectralShape,
    g2_zero: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AliceSection {
    p_z: f64,
    pattern: Option<PathBuf>,
    #[serde(default = "default_key_basis")]
    key_basis: PhysicalBasis,
}

fn default_key_basis() -> PhysicalBasis {
    PhysicalBasis::Da
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BobSection {
    #[serde(default = "half")]
    split: f64,
    #[serde(default)]
    double_click: DoubleClickPolicy,
}

impl Default for BobSection {
    fn default() -> Self {
        Self { split: 0.5, double_click: DoubleClickPolicy::Discard }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SecuritySection {
    eps_sec: f64,
    eps_cor: f64,
    f: f64,
}

impl Default for SecuritySection {
    fn default() -> Self {
        let r = SecurityParams::<f64>::reference();
        Self { eps_sec: r.eps_sec, eps_cor: r.eps_cor, f: r.f_ec }
    }
}

/// Reported session figures used to rebuild key-analysis counts.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observed {
    /// Sifted bits per second over the whole session, if reported.
    pub sifted_bps: Option<f64>,
    pub qber_da: f64,
    pub qber_lr: f64,
}

impl Observed {
    pub fn qber_model(&self) -> QberModel {
        QberModel::Fixed { qber_da: self.qber_da, qber_lr: self.qber_lr }
    }
}

/// A fully resolved and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub session: SessionConfig,
    pub security: SecurityParams<f64>,
    pub n_pulses: Option<u64>,
    pub duration_s: Option<f64>,
    pub observed: Option<Observed>,
}

impl Scenario {
    /// Loads a scenario from a file path, or by bundled name when no such file exists.
    pub fn load(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
            return Self::parse(&text, path.parent()).with_context(|| format!("scenario {}", path.display()));
        }
        match BUNDLED.iter().find(|(name, _)| *name == spec) {
            Some((name, text)) => Self::parse(text, None).with_context(|| format!("bundled scenario {name}")),
            None => Err(polqkd::Error::InvalidInput(format!(
                "no scenario file {spec:?} and no bundled scenario of that name (bundled: {})",
                BUNDLED.map(|b| b.0).join(", ")
            ))
            .into()),
        }
    }

    /// Parses scenario TOML; relative pattern paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)?;
        let d = &file.device;
        let device = DeviceParams {
            rep_rate: d.nu_rep,
            source_mu: d.r_c,
            det_efficiency: d.eta_det,
            dark_rate: d.p_dark,
            intrinsic_qber: d.e0,
            alice_loss_db: d.l_a,
            bob_loss_db: d.l_b,
        };
        device.validate().context("[device]")?;

        let e = &file.emitter;
        let spectrum = EmitterSpectrum::new(e.center_nm, e.fwhm_nm, e.shape).context("[emitter]")?;
        let photons = PhotonStatistics::new(d.r_c, e.g2_zero).context("[emitter] with device.r_c")?;

        let channel = channel_from(&file.channel, e.center_nm).context("[channel]")?;

        let a = &file.alice;
        let mut alice = AliceSettings::new(a.p_z).context("[alice]")?;
        if let Some(p) = &a.pattern {
            let full = base.map_or_else(|| p.clone(), |b| b.join(p));
            alice.pattern = Some(Pattern::load(&full).with_context(|| format!("[alice] pattern {}", full.display()))?);
        }

        let s = &file.security;
        let security = SecurityParams { eps_sec: s.eps_sec, eps_cor: s.eps_cor, f_ec: s.f };
        security.validate().context("[security]")?;

        let session = SessionConfig {
            device,
            placement: d.loss_placement,
            photons,
            spectrum,
            channel,
            alice,
            bob_split: file.bob.split,
            assignment: BasisAssignment::new(a.key_basis),
            double_click: file.bob.double_click,
            window_s: file.window_s,
        };
        session.validate()?;
        if file.n_pulses == Some(0) {
            bail!(polqkd::Error::InvalidInput("n_pulses must be >= 1".into()));
        }
        if let Some(t) = file.duration_s {
            if !(t > 0.0) {
                bail!(polqkd::Error::InvalidInput("duration_s must be > 0".into()));
            }
        }
        if let Some(o) = &file.observed {
            for (name, q) in [("qber_da", o.qber_da), ("qber_lr", o.qber_lr)] {
                if !(0.0..=0.5).contains(&q) {
                    bail!(polqkd::Error::InvalidInput(format!("[observed] {name} must lie in [0, 0.5], got {q}")));
                }
            }
        }
        Ok(Self {
            name: file.name,
            session,
            security,
            n_pulses: file.n_pulses,
            duration_s: file.duration_s,
            observed: file.observed,
        })
    }

    /// Pulses to simulate: explicit count, else the duration at the repetition rate.
    pub fn pulses(&self) -> Option<u64> {
        self.n_pulses.or_else(|| self.duration_s.map(|t| (t * self.session.device.rep_rate).round() as u64))
    }

    /// Session length for key analysis.
    pub fn duration(&self) -> Option<f64> {
        self.duration_s.or_else(|| self.n_pulses.map(|n| n as f64 / self.session.device.rep_rate))
    }
}

fn channel_from(c: &ChannelSection, center_nm: f64) -> Result<FiberChannel<f64>> {
    let reference = c.reference_nm.unwrap_or(center_nm);
    match (&c.segments, &c.synthesize) {
        (Some(segs), None) => {
            let segments = segs
                .iter()
                .enumerate()
                .map(|(i, s)| FiberSegment::new(s.axis.resolve()?, s.dgd_ps).with_context(|| format!("segment {i}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(FiberChannel::new(segments, c.l_c, c.length_km, reference)?)
        }
        (None, Some(s)) => Ok(synthesize_channel(s.pmd_param, c.length_km, s.n_segments, s.seed)?
            .with_loss(c.l_c)
            .with_reference(reference)),
        _ => bail!(polqkd::Error::InvalidInput("exactly one of `segments` or `synthesize` must be given".into())),
    }
}
