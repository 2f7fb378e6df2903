//! Key-analysis input file: device figures under their table symbols plus
//! either explicit counts or a session summary to rebuild counts from.

use polqkd::emitter::PhotonStatistics;
use polqkd::keyrate::{detection_probability, ReconstructedSession, SecurityParams};
use polqkd::protocol::{DeviceParams, LossPlacement};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyAnalysisInput {
    pub nu_rep: f64,
    pub r_c: f64,
    pub eta_det: f64,
    pub p_dark: f64,
    pub e0: f64,
    pub l_c: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub f: f64,
    pub g2_zero: f64,
    #[serde(default)]
    pub loss_placement: LossPlacement,
    /// Overrides the analytic detection probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_det: Option<f64>,
    /// Overrides `g2(0) r_c^2 / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<ReconstructedSession>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tally: Option<TallyCounts>,
}

/// Explicit sifted counts; `p_x = 1 - p_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TallyCounts {
    pub n_z: f64,
    pub n_x: f64,
    pub e_z: f64,
    pub e_x: f64,
    pub p_z: f64,
    pub duration_s: f64,
}

impl KeyAnalysisInput {
    pub fn device(&self) -> DeviceParams {
        DeviceParams {
            rep_rate: self.nu_rep,
            source_mu: self.r_c,
            det_efficiency: self.eta_det,
            dark_rate: self.p_dark,
            intrinsic_qber: self.e0,
            alice_loss_db: self.l_a,
            bob_loss_db: self.l_b,
        }
    }

    pub fn security(&self) -> SecurityParams<f64> {
        SecurityParams { eps_sec: self.eps_sec, eps_cor: self.eps_cor, f_ec: self.f }
    }

    pub fn photons(&self) -> polqkd::Result<PhotonStatistics> {
        PhotonStatistics::new(self.r_c, self.g2_zero)
    }

    pub fn p_m(&self) -> polqkd::Result<f64> {
        Ok(match self.p_m {
            Some(p) => p,
            None => self.photons()?.p_multi(),
        })
    }

    pub fn analytic_p_det(&self) -> polqkd::Result<f64> {
        match self.p_det {
            Some(p) => Ok(p),
            None => detection_probability(&self.device(), self.l_c, self.loss_placement, &self.photons()?),
        }
    }
}
