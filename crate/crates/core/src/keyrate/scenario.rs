use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emitter::PhotonStatistics;
use crate::error::{invalid, Result};
use crate::polarization::{BasisRole, PhysicalBasis};
use crate::protocol::{expected_rates, DeviceParams, LossPlacement, SessionConfig};

use super::{
    gllp_asymptotic_rate, optimize_basis_probability, secure_key_length, GllpInputs, KeyResult, KeyTally,
    OptimizationReport, SecurityParams,
};

/// Upper end of the key-basis probability search.
const P_KEY_MAX: f64 = 1.0 - 1e-4;

/// Per-slot click probability `1 - (1 - p_signal)(1 - p_dark)^4`.
pub fn detection_probability(
    device: &DeviceParams,
    channel_loss_db: f64,
    placement: LossPlacement,
    photons: &PhotonStatistics,
) -> Result<f64> {
    device.validate()?;
    let (p0, p1, p2) = photons.distribution()?;
    let miss = 1.0 - device.photon_detection_probability(channel_loss_db, placement);
    let no_signal = p0 + p1 * miss + p2 * miss * miss;
    Ok(1.0 - no_signal * (1.0 - device.dark_rate).powi(4))
}

/// Source of the per-basis QBER used in key-rate scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum QberModel {
    /// Per-basis QBER from the closed-form session model.
    Analytic,
    /// Measured QBER held fixed while counts follow the session model.
    Fixed { qber_da: f64, qber_lr: f64 },
}

impl QberModel {
    fn qber(&self, basis: PhysicalBasis, analytic: f64) -> f64 {
        match (self, basis) {
            (Self::Analytic, _) => analytic,
            (Self::Fixed { qber_da, .. }, PhysicalBasis::Da) => *qber_da,
            (Self::Fixed { qber_lr, .. }, PhysicalBasis::Lr) => *qber_lr,
        }
    }
}

/// A session configuration evaluated with expected counts over a fixed duration.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyScenario {
    pub session: SessionConfig,
    pub security: SecurityParams<f64>,
    pub duration_s: f64,
    pub qber: QberModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub loss_db: f64,
    pub finite_bps: f64,
    pub gllp_bps: f64,
}

impl KeyScenario {
    pub fn with_p_key(&self, p_key: f64) -> Self {
        let mut s = self.clone();
        s.session.alice.p_key = p_key;
        s
    }

    pub fn with_loss(&self, loss_db: f64) -> Self {
        let mut s = self.clone();
        s.session.channel.loss_db = loss_db;
        s
    }

    fn rates(&self) -> Result<(crate::protocol::ExpectedRates, f64, f64)> {
        if !(self.duration_s > 0.0) {
            return Err(invalid("duration must be > 0 s"));
        }
        let r = expected_rates(&self.session)?;
        let a = self.session.assignment;
        let e_key = self.qber.qber(a.key, r.basis(a.key).qber);
        let e_check = self.qber.qber(a.check(), r.basis(a.check()).qber);
        Ok((r, e_key, e_check))
    }

    /// Expected tally: `n = duration * nu_rep * P(sifted in basis)`.
    pub fn tally(&self) -> Result<KeyTally<f64>> {
        let (r, e_key, e_check) = self.rates()?;
        let pulses = self.duration_s * self.session.device.rep_rate;
        Ok(KeyTally {
            n_key: pulses * r.role(BasisRole::Key).p_sift,
            n_check: pulses * r.role(BasisRole::Check).p_sift,
            e_key,
            e_check,
            p_key: self.session.alice.p_key,
            p_check: self.session.alice.p_check(),
            p_det: r.p_det,
            p_m: self.session.photons.p_multi(),
            duration_s: self.duration_s,
        })
    }

    pub fn finite(&self) -> Result<KeyResult<f64>> {
        secure_key_length(&self.tally()?, &self.security)
    }

    pub fn gllp(&self) -> Result<f64> {
        let (r, e_key, e_check) = self.rates()?;
        if r.p_det == 0.0 {
            return Ok(0.0);
        }
        gllp_asymptotic_rate(&GllpInputs {
            rep_rate: self.session.device.rep_rate,
            p_det: r.p_det,
            p_m: self.session.photons.p_multi(),
            p_key: self.session.alice.p_key,
            p_check: self.session.alice.p_check(),
            sift_factor: r.role(BasisRole::Key).p_sift / r.p_det,
            e_key,
            e_check,
            f_ec: self.security.f_ec,
        })
    }

    /// Maximizes the finite-key rate over the key-basis probability.
    pub fn optimize(&self) -> Result<OptimizationReport> {
        self.tally()?;
        optimize_basis_probability(|p| self.with_p_key(p).finite().map_or(0.0, |r| r.rate_bps), 0.5, P_KEY_MAX)
    }
}

/// Finite-key and GLLP rates of `scenario` at each channel loss.
pub fn rate_vs_loss_curve(scenario: &KeyScenario, losses_db: &[f64]) -> Result<Vec<CurvePoint>> {
    if losses_db.is_empty() {
        return Err(invalid("loss grid is empty"));
    }
    losses_db
        .par_iter()
        .map(|&loss| {
            let s = scenario.with_loss(loss);
            Ok(CurvePoint { loss_db: loss, finite_bps: s.finite()?.rate_bps, gllp_bps: s.gllp()? })
        })
        .collect()
}

/// Summary statistics of a finished session, from which counts are rebuilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedSession {
    pub sifted_bps: f64,
    pub duration_s: f64,
    pub qber_da: f64,
    pub qber_lr: f64,
    #[serde(rename = "p_z")]
    pub p_key: f64,
    #[serde(default = "half")]
    pub bob_split: f64,
    #[serde(default = "da")]
    pub key_basis: PhysicalBasis,
}

fn half() -> f64 {
    0.5
}

fn da() -> PhysicalBasis {
    PhysicalBasis::Da
}

/// Rebuilds a key tally from a sifted rate and per-basis QBERs. Sifted bits
/// split between the bases in proportion to `p_z b` and `p_x (1 - b)`, `b`
/// being Bob's key-basis splitting ratio.
pub fn reconstruct_tally(session: &ReconstructedSession, p_det: f64, p_m: f64) -> Result<KeyTally<f64>> {
    let s = session;
    if !(s.sifted_bps >= 0.0) || !(s.duration_s > 0.0) {
        return Err(invalid("sifted rate must be >= 0 and duration > 0"));
    }
    if !(s.p_key > 0.0 && s.p_key < 1.0) || !(s.bob_split > 0.0 && s.bob_split < 1.0) {
        return Err(invalid("p_z and bob_split must lie in (0, 1)"));
    }
    let total = s.sifted_bps * s.duration_s;
    let key_weight = s.p_key * s.bob_split;
    let share = key_weight / (key_weight + (1.0 - s.p_key) * (1.0 - s.bob_split));
    let qber = |b: PhysicalBasis| match b {
        PhysicalBasis::Da => s.qber_da,
        PhysicalBasis::Lr => s.qber_lr,
    };
    let tally = KeyTally {
        n_key: total * share,
        n_check: total * (1.0 - share),
        e_key: qber(s.key_basis),
        e_check: qber(s.key_basis.other()),
        p_key: s.p_key,
        p_check: 1.0 - s.p_key,
        p_det,
        p_m,
        duration_s: s.duration_s,
    };
    tally.validate()?;
    Ok(tally)
}
