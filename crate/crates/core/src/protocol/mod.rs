//! BB84 session engine: preparation, channel transit, passive-basis
//! measurement, sifting and the matching closed-form rate model.

mod analytic;
mod pattern;
mod session;
mod sift;

pub use analytic::{calibrate_mu, expected_rates, BasisExpectation, ExpectedRates};
pub use pattern::Pattern;
pub use session::{prepare_pulse, run_session, transmit_and_measure, Pulse, SessionOutput, SessionStatus, WindowStat};
pub use sift::{sift, sift_slots, AliceRecord, BobRecord, DoubleClickPolicy, SiftResult, SiftTally, SlotRecord};

use serde::{Deserialize, Serialize};

use crate::channel::FiberChannel;
use crate::emitter::{EmitterSpectrum, PhotonStatistics};
use crate::error::{invalid, Result};
use crate::polarization::{BasisAssignment, BasisRole, PhysicalBasis};

/// Source, detector and device-loss figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Pulse repetition rate, Hz.
    #[serde(rename = "nu_rep")]
    pub rep_rate: f64,
    /// Mean photon number per pulse.
    #[serde(rename = "r_c")]
    pub source_mu: f64,
    #[serde(rename = "eta_det")]
    pub det_efficiency: f64,
    /// Dark-click probability per detector per slot.
    #[serde(rename = "p_dark")]
    pub dark_rate: f64,
    /// Channel-independent bit-flip probability on signal clicks.
    #[serde(rename = "e0")]
    pub intrinsic_qber: f64,
    #[serde(rename = "l_a")]
    pub alice_loss_db: f64,
    #[serde(rename = "l_b")]
    pub bob_loss_db: f64,
}

impl DeviceParams {
    /// Field-trial device figures.
    pub fn reference() -> Self {
        Self {
            rep_rate: 80e6,
            source_mu: 4.19e-4,
            det_efficiency: 0.375,
            dark_rate: 1e-7,
            intrinsic_qber: 0.009,
            alice_loss_db: 6.2,
            bob_loss_db: 1.7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [("eta_det", self.det_efficiency), ("p_dark", self.dark_rate), ("e0", self.intrinsic_qber)];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must be a probability, got {p}")));
            }
        }
        if !(self.rep_rate > 0.0) || !self.rep_rate.is_finite() {
            return Err(invalid("nu_rep must be > 0"));
        }
        if !(self.source_mu >= 0.0) {
            return Err(invalid("r_c must be >= 0"));
        }
        if !(self.alice_loss_db >= 0.0) || !(self.bob_loss_db >= 0.0) {
            return Err(invalid("device losses must be >= 0 dB"));
        }
        Ok(())
    }

    /// Total loss in dB between the source figure `r_c` and the detectors.
    pub fn total_loss_db(&self, channel_loss_db: f64, placement: LossPlacement) -> f64 {
        match placement {
            LossPlacement::AllExplicit => self.alice_loss_db + channel_loss_db + self.bob_loss_db,
            LossPlacement::SourceIncludesAlice => channel_loss_db + self.bob_loss_db,
            LossPlacement::DeviceLossesAbsorbed => channel_loss_db,
        }
    }

    /// Probability that one emitted photon produces a click.
    pub fn photon_detection_probability(&self, channel_loss_db: f64, placement: LossPlacement) -> f64 {
        10f64.powf(-self.total_loss_db(channel_loss_db, placement) / 10.0) * self.det_efficiency
    }
}

/// Where the device losses are accounted for relative to `r_c` and `eta_det`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossPlacement {
    /// `r_c` is the source figure; Alice, channel and Bob losses all apply.
    #[default]
    AllExplicit,
    /// `r_c` is already the mean photon number at Alice's output.
    SourceIncludesAlice,
    /// `r_c` is at Alice's output and `eta_det` already includes Bob's optics.
    DeviceLossesAbsorbed,
}

impl std::str::FromStr for LossPlacement {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all-explicit" => Ok(Self::AllExplicit),
            "source-includes-alice" => Ok(Self::SourceIncludesAlice),
            "device-losses-absorbed" => Ok(Self::DeviceLossesAbsorbed),
            other => Err(invalid(format!("unknown loss placement {other:?}"))),
        }
    }
}

/// Alice's basis choice.
#[derive(Debug, Clone, PartialEq)]
pub struct AliceSettings {
    /// Probability of the key basis (Z).
    pub p_key: f64,
    /// Pre-recorded modulator settings, consumed one per slot; `None` draws
    /// from the session's seeded generator.
    pub pattern: Option<Pattern>,
}

impl AliceSettings {
    pub fn new(p_key: f64) -> Result<Self> {
        let s = Self { p_key, pattern: None };
        s.validate()?;
        Ok(s)
    }

    pub fn p_check(&self) -> f64 {
        1.0 - self.p_key
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_key > 0.0 && self.p_key <= 1.0) {
            return Err(invalid(format!("p_key must lie in (0, 1], got {}", self.p_key)));
        }
        Ok(())
    }

    pub fn probability(&self, role: BasisRole) -> f64 {
        match role {
            BasisRole::Key => self.p_key,
            BasisRole::Check => self.p_check(),
        }
    }
}

/// Everything needed to run or predict a session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub device: DeviceParams,
    pub placement: LossPlacement,
    pub photons: PhotonStatistics,
    pub spectrum: EmitterSpectrum<f64>,
    pub channel: FiberChannel<f64>,
    pub alice: AliceSettings,
    /// Probability that Bob's passive splitter routes a photon to the key-basis analyzer.
    pub bob_split: f64,
    pub assignment: BasisAssignment,
    pub double_click: DoubleClickPolicy,
    /// Time-series integration window, seconds.
    pub window_s: f64,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        self.photons.validate()?;
        self.spectrum.validate()?;
        self.channel.validate()?;
        self.alice.validate()?;
        if !(0.0..=1.0).contains(&self.bob_split) {
            return Err(invalid("bob_split must be a probability"));
        }
        if !(self.window_s > 0.0) {
            return Err(invalid("window length must be > 0 s"));
        }
        Ok(())
    }

    /// Probability one emitted photon survives to a click.
    pub fn photon_detection_probability(&self) -> f64 {
        self.device.photon_detection_probability(self.channel.loss_db, self.placement)
    }

    /// Probability Bob analyzes a photon in `basis`.
    pub fn bob_probability(&self, basis: PhysicalBasis) -> f64 {
        match self.assignment.role_of(basis) {
            BasisRole::Key => self.bob_split,
            BasisRole::Check => 1.0 - self.bob_split,
        }
    }

    /// Probability Alice prepares in `basis` (for PRNG-driven sessions).
    pub fn alice_probability(&self, basis: PhysicalBasis) -> f64 {
        self.alice.probability(self.assignment.role_of(basis))
    }
}

/// Detector index: two per basis, port 0 carries bit 0.
pub(crate) fn detector_index(basis: PhysicalBasis, bit: bool) -> u8 {
    let b = match basis {
        PhysicalBasis::Da => 0,
        PhysicalBasis::Lr => 2,
    };
    b + bit as u8
}

pub(crate) fn basis_mask(basis: PhysicalBasis) -> u8 {
    match basis {
        PhysicalBasis::Da => 0b0011,
        PhysicalBasis::Lr => 0b1100,
    }
}
