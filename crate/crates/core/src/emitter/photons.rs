use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Per-pulse photon-number statistics of the source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonStatistics {
    /// Mean photon number per pulse.
    pub mu: f64,
    /// Zero-delay second-order correlation.
    pub g2_zero: f64,
}

/// Upper bound on the multi-photon probability per pulse, `g2(0) mu^2 / 2`.
/// The bound is used as the working value everywhere.
pub fn p_multi(stats: &PhotonStatistics) -> f64 {
    stats.g2_zero * stats.mu * stats.mu / 2.0
}

impl PhotonStatistics {
    pub fn new(mu: f64, g2_zero: f64) -> Result<Self> {
        let s = Self { mu, g2_zero };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(invalid(format!("mean photon number must be >= 0, got {}", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.g2_zero) {
            return Err(invalid(format!("g2(0) must lie in [0, 1], got {}", self.g2_zero)));
        }
        let (_, p1, _) = self.distribution()?;
        if p1 < 0.0 {
            return Err(invalid("inconsistent statistics: mu - 2 p_multi < 0"));
        }
        Ok(())
    }

    pub fn p_multi(&self) -> f64 {
        p_multi(self)
    }

    /// `(P0, P1, P2)` of the two-photon-truncated source; the mean is exactly `mu`.
    pub fn distribution(&self) -> Result<(f64, f64, f64)> {
        let p2 = self.p_multi();
        let p1 = self.mu - 2.0 * p2;
        let p0 = 1.0 - p1 - p2;
        if p1 < 0.0 || p0 < 0.0 {
            return Err(invalid(format!(
                "inconsistent statistics: mu = {}, p_multi = {} leave no valid distribution",
                self.mu, p2
            )));
        }
        Ok((p0, p1, p2))
    }

    /// Draws the photon number of one pulse (0, 1 or 2).
    pub fn sample_photon_number<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u8> {
        let (_, p1, p2) = self.distribution()?;
        Ok(draw(rng.random::<f64>(), p1, p2))
    }
}

#[inline]
pub(crate) fn draw(u: f64, p1: f64, p2: f64) -> u8 {
    if u < p2 {
        2
    } else if u < p2 + p1 {
        1
    } else {
        0
    }
}
