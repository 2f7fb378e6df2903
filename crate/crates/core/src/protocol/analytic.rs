use serde::{Deserialize, Serialize};

use crate::emitter::{PhotonStatistics, DEFAULT_QUADRATURE_NODES};
use crate::error::{invalid, Error, Result};
use crate::polarization::{BasisRole, PhysicalBasis};

use super::{basis_mask, detector_index, DoubleClickPolicy, SessionConfig};

const BASES: [PhysicalBasis; 2] = [PhysicalBasis::Da, PhysicalBasis::Lr];

/// Per-basis expectation values, per pulse unless stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisExpectation {
    pub basis: PhysicalBasis,
    pub role: BasisRole,
    /// Probability a pulse is sifted in this basis.
    pub p_sift: f64,
    /// Probability a pulse is sifted in this basis with a wrong bit.
    pub p_error: f64,
    pub qber: f64,
    pub sifted_bps: f64,
}

/// Closed-form session statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRates {
    /// Probability of at least one click per slot.
    pub p_det: f64,
    /// Probability of at least one photon click per slot, dark counts excluded.
    pub p_signal: f64,
    pub sifted_rate_bps: f64,
    /// Sifted slots per detection.
    pub sifted_fraction: f64,
    /// Share of sifted slots in the key basis.
    pub key_share: f64,
    pub e_key: f64,
    pub e_check: f64,
    pub qber_da: f64,
    pub qber_lr: f64,
    pub qber: f64,
    pub da: BasisExpectation,
    pub lr: BasisExpectation,
}

impl ExpectedRates {
    pub fn basis(&self, basis: PhysicalBasis) -> &BasisExpectation {
        match basis {
            PhysicalBasis::Da => &self.da,
            PhysicalBasis::Lr => &self.lr,
        }
    }

    pub fn role(&self, role: BasisRole) -> &BasisExpectation {
        if self.da.role == role {
            &self.da
        } else {
            &self.lr
        }
    }
}

type MaskDist = [f64; 16];

fn or_convolve(a: &MaskDist, b: &MaskDist) -> MaskDist {
    let mut out = [0.0; 16];
    for (i, pa) in a.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        for (j, pb) in b.iter().enumerate() {
            out[i | j] += pa * pb;
        }
    }
    out
}

fn dark_distribution(p: f64) -> MaskDist {
    let mut out = [0.0; 16];
    for (m, slot) in out.iter_mut().enumerate() {
        *slot = (0..4).map(|d| if m >> d & 1 == 1 { p } else { 1.0 - p }).product();
    }
    out
}

/// Probability that a photon prepared as (`basis`, `bit`) lands on Bob's
/// bit-0 port of `measured`, averaged over the emission spectrum and
/// including the intrinsic flip.
fn port_zero_probability(config: &SessionConfig, basis: PhysicalBasis, bit: bool, measured: PhysicalBasis) -> f64 {
    let prepared = super::Pulse::new(basis, bit).stokes;
    let axis = measured.axis::<f64>();
    let p0: f64 = config
        .spectrum
        .quadrature(DEFAULT_QUADRATURE_NODES)
        .iter()
        .map(|&(wl, w)| w * 0.5 * (1.0 + config.channel.apply(&prepared, wl).dot(&axis)))
        .sum();
    let p0 = p0.clamp(0.0, 1.0);
    let e0 = config.device.intrinsic_qber;
    p0 * (1.0 - e0) + (1.0 - p0) * e0
}

/// Expected detection, sifting and error probabilities, by exact enumeration
/// of photon numbers, receiver paths and dark-click patterns.
pub fn expected_rates(config: &SessionConfig) -> Result<ExpectedRates> {
    config.validate()?;
    let (p0, p1, p2) = config.photons.distribution()?;
    let p_click = config.photon_detection_probability();
    let dark = dark_distribution(config.device.dark_rate);

    let mut p_sift = [0.0; 2];
    let mut p_error = [0.0; 2];
    let mut p_det = 0.0;
    for (ai, &a) in BASES.iter().enumerate() {
        let alice_p = config.alice_probability(a);
        for bit in [false, true] {
            let weight = 0.5 * alice_p;
            let mut one = [0.0; 16];
            one[0] = 1.0 - p_click;
            for b in BASES {
                let route = p_click * config.bob_probability(b);
                let q0 = port_zero_probability(config, a, bit, b);
                one[1 << detector_index(b, false)] += route * q0;
                one[1 << detector_index(b, true)] += route * (1.0 - q0);
            }
            let two = or_convolve(&one, &one);
            let mut photons = [0.0; 16];
            for m in 0..16 {
                photons[m] = p1 * one[m] + p2 * two[m];
            }
            photons[0] += p0;
            let total = or_convolve(&photons, &dark);

            let own_zero = 1u8 << detector_index(a, false);
            let own_one = 1u8 << detector_index(a, true);
            for (m, &p) in total.iter().enumerate().skip(1) {
                let m = m as u8;
                p_det += weight * p;
                let own = m & basis_mask(a);
                if own == 0 || m & basis_mask(a.other()) != 0 {
                    continue;
                }
                let wrong = if own == own_zero {
                    bit as u8 as f64
                } else if own == own_one {
                    !bit as u8 as f64
                } else {
                    match config.double_click {
                        DoubleClickPolicy::Discard => continue,
                        DoubleClickPolicy::RandomBit => 0.5,
                    }
                };
                p_sift[ai] += weight * p;
                p_error[ai] += weight * p * wrong;
            }
        }
    }

    let p_signal = 1.0 - p0 - p1 * (1.0 - p_click) - p2 * (1.0 - p_click).powi(2);
    let rep = config.device.rep_rate;
    let ratio = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
    let basis = |i: usize| BasisExpectation {
        basis: BASES[i],
        role: config.assignment.role_of(BASES[i]),
        p_sift: p_sift[i],
        p_error: p_error[i],
        qber: ratio(p_error[i], p_sift[i]),
        sifted_bps: rep * p_sift[i],
    };
    let (da, lr) = (basis(0), basis(1));
    let sifted = p_sift[0] + p_sift[1];
    let key = if da.role == BasisRole::Key { da } else { lr };
    let check = if da.role == BasisRole::Key { lr } else { da };
    Ok(ExpectedRates {
        p_det,
        p_signal,
        sifted_rate_bps: rep * sifted,
        sifted_fraction: ratio(sifted, p_det),
        key_share: ratio(key.p_sift, sifted),
        e_key: key.qber,
        e_check: check.qber,
        qber_da: da.qber,
        qber_lr: lr.qber,
        qber: ratio(p_error[0] + p_error[1], sifted),
        da,
        lr,
    })
}

/// Finds the mean photon number that yields `target_bps` sifted bits per
/// second with every other setting of `config` held fixed.
pub fn calibrate_mu(config: &SessionConfig, target_bps: f64) -> Result<f64> {
    if !(target_bps >= 0.0) {
        return Err(invalid("target sifted rate must be >= 0"));
    }
    let g2 = config.photons.g2_zero;
    let rate = |mu: f64| -> Result<f64> {
        let mut c = config.clone();
        c.photons = PhotonStatistics::new(mu, g2)?;
        Ok(expected_rates(&c)?.sifted_rate_bps)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if rate(lo)? > target_bps {
        return Err(invalid(format!("dark counts alone exceed the target rate of {target_bps} bps")));
    }
    if rate(hi)? < target_bps {
        return Err(invalid(format!("target rate {target_bps} bps is unreachable for mu <= {hi}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? < target_bps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NonConvergence { iterations: 200, reason: "mu calibration bisection did not close".into() })
}
