//! Finite-key secure length with multi-photon, fluctuation and
//! error-correction terms; the GLLP asymptotic rate; basis-probability
//! optimization and rate-versus-loss curves.

mod optimize;
mod scenario;

pub use optimize::{optimize_basis_probability, AuditPoint, OptimizationReport, OptimizationStatus, SearchMethod};
pub use scenario::{
    detection_probability, rate_vs_loss_curve, reconstruct_tally, CurvePoint, KeyScenario, QberModel,
    ReconstructedSession,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Composable security parameters and the error-correction efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams<T> {
    pub eps_sec: T,
    pub eps_cor: T,
    #[serde(rename = "f")]
    pub f_ec: T,
}

impl<T: Real> SecurityParams<T> {
    /// Field-trial values: both epsilons 1e-12, f = 1.16.
    pub fn reference() -> Self {
        Self { eps_sec: T::lit(1e-12), eps_cor: T::lit(1e-12), f_ec: T::lit(1.16) }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("eps_sec", self.eps_sec), ("eps_cor", self.eps_cor)] {
            if !(e > T::zero() && e < T::one()) {
                return Err(invalid(format!("{name} must lie in (0, 1), got {e}")));
            }
        }
        if !(self.f_ec >= T::one()) || !self.f_ec.is_finite() {
            return Err(invalid(format!("f must be >= 1, got {}", self.f_ec)));
        }
        Ok(())
    }
}

/// Sifted counts and per-pulse probabilities entering the key length.
/// Counts are real so that expected counts can be used directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyTally<T> {
    #[serde(rename = "n_z")]
    pub n_key: T,
    #[serde(rename = "n_x")]
    pub n_check: T,
    #[serde(rename = "e_z")]
    pub e_key: T,
    #[serde(rename = "e_x")]
    pub e_check: T,
    #[serde(rename = "p_z")]
    pub p_key: T,
    #[serde(rename = "p_x")]
    pub p_check: T,
    pub p_det: T,
    pub p_m: T,
    /// Session length the counts were accumulated over, seconds.
    pub duration_s: T,
}

impl<T: Real> KeyTally<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_z", self.n_key), ("n_x", self.n_check)] {
            if !(n >= T::zero()) || !n.is_finite() {
                return Err(invalid(format!("{name} must be a finite count >= 0, got {n}")));
            }
        }
        for (name, p) in [("e_z", self.e_key), ("e_x", self.e_check), ("p_det", self.p_det), ("p_m", self.p_m)] {
            if !(p >= T::zero() && p <= T::one()) {
                return Err(invalid(format!("{name} must be a probability, got {p}")));
            }
        }
        for (name, p) in [("p_z", self.p_key), ("p_x", self.p_check)] {
            if !(p > T::zero() && p <= T::one()) {
                return Err(invalid(format!("{name} must lie in (0, 1], got {p}")));
            }
        }
        if !(self.duration_s > T::zero()) || !self.duration_s.is_finite() {
            return Err(invalid(format!("duration must be > 0 s, got {}", self.duration_s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyStatus {
    Secure,
    /// No sifted key-basis bits.
    NoCounts,
    /// No check-basis bits, so the phase error cannot be bounded.
    NoCheckSamples,
    /// A_z or A_x is not positive.
    MultiPhotonDominated,
    /// Q_x + delta reached 1/2.
    NoiseDominated,
    /// All factors valid but the length is not positive.
    FiniteSizeDominated,
}

/// Individual terms of the key-length expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyTerms<T> {
    pub a_key: T,
    pub a_check: T,
    pub q_check: T,
    pub delta: T,
    /// `Q_x + delta` after clamping to 1/2.
    pub phase_error: T,
    /// `n_z A_z (1 - h(Q_x + delta))`.
    pub privacy: T,
    pub leak_ec: T,
    pub log_term: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyResult<T> {
    pub length_bits: u64,
    /// Unclamped, unfloored expression value.
    pub raw_length: T,
    pub rate_bps: T,
    pub status: KeyStatus,
    pub terms: Option<KeyTerms<T>>,
}

impl<T: Real> KeyResult<T> {
    fn zero(status: KeyStatus, terms: Option<KeyTerms<T>>) -> Self {
        let raw_length = terms.map_or(T::zero(), |t| t.privacy - t.leak_ec - t.log_term);
        Self { length_bits: 0, raw_length, rate_bps: T::zero(), status, terms }
    }
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy<T: Real>(q: T) -> Result<T> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(invalid(format!("entropy argument must lie in [0, 1], got {q}")));
    }
    if q == T::zero() || q == T::one() {
        return Ok(T::zero());
    }
    let nats = -q * q.ln() - (T::one() - q) * (-q).ln_1p();
    Ok(nats / T::LN_2())
}

/// Multi-photon correction `1 - p_m / (p_det p_basis)`. A non-positive value
/// means no secure key can be distilled in that basis.
pub fn multiphoton_correction<T: Real>(p_m: T, p_det: T, p_basis: T) -> Result<T> {
    let den = p_det * p_basis;
    if !(den > T::zero()) {
        return Err(invalid("p_det * p_basis must be > 0"));
    }
    Ok(T::one() - p_m / den)
}

/// Statistical fluctuation of the phase-error estimate.
pub fn fluctuation_delta<T: Real>(n_key: T, n_check: T, eps_sec: T) -> Result<T> {
    if !(n_key > T::zero() && n_check > T::zero()) {
        return Err(invalid("fluctuation term needs n_z > 0 and n_x > 0"));
    }
    if !(eps_sec > T::zero() && eps_sec < T::one()) {
        return Err(invalid("eps_sec must lie in (0, 1)"));
    }
    let ratio = (n_key + n_check) * (n_check + T::one()) / (n_key * n_check * n_check);
    Ok((ratio * (T::two() / eps_sec).ln()).sqrt())
}

/// Error-correction leakage `f h(e_z) n_z` in bits.
pub fn leak_ec<T: Real>(f_ec: T, e_key: T, n_key: T) -> Result<T> {
    Ok(f_ec * binary_entropy(e_key)? * n_key)
}

/// `log2(2 / (eps_sec^2 eps_cor))`, evaluated in log space.
pub fn log_term<T: Real>(eps_sec: T, eps_cor: T) -> T {
    T::one() - T::two() * eps_sec.log2() - eps_cor.log2()
}

/// Finite-key secure length and rate of `tally`.
pub fn secure_key_length<T: Real>(tally: &KeyTally<T>, params: &SecurityParams<T>) -> Result<KeyResult<T>> {
    tally.validate()?;
    params.validate()?;
    if tally.n_key == T::zero() {
        return Ok(KeyResult::zero(KeyStatus::NoCounts, None));
    }
    if tally.n_check == T::zero() {
        return Ok(KeyResult::zero(KeyStatus::NoCheckSamples, None));
    }
    let a_key = multiphoton_correction(tally.p_m, tally.p_det, tally.p_key)?;
    let a_check = multiphoton_correction(tally.p_m, tally.p_det, tally.p_check)?;
    let delta = fluctuation_delta(tally.n_key, tally.n_check, params.eps_sec)?;
    let leak = leak_ec(params.f_ec, tally.e_key, tally.n_key)?;
    let log = log_term(params.eps_sec, params.eps_cor);
    let half = T::half();

    if a_key <= T::zero() || a_check <= T::zero() {
        let terms = KeyTerms {
            a_key,
            a_check,
            q_check: half,
            delta,
            phase_error: half,
            privacy: T::zero(),
            leak_ec: leak,
            log_term: log,
        };
        return Ok(KeyResult::zero(KeyStatus::MultiPhotonDominated, Some(terms)));
    }

    let q_check = tally.e_check / a_check;
    let noisy = q_check + delta >= half;
    let phase_error = (q_check + delta).min(half);
    let privacy = tally.n_key * a_key * (T::one() - binary_entropy(phase_error)?);
    let terms = KeyTerms { a_key, a_check, q_check, delta, phase_error, privacy, leak_ec: leak, log_term: log };
    if noisy {
        return Ok(KeyResult::zero(KeyStatus::NoiseDominated, Some(terms)));
    }
    let raw = privacy - leak - log;
    let length = raw.floor().max(T::zero()).min(tally.n_key.floor());
    let length_bits = length.to_u64().unwrap_or(0);
    if length_bits == 0 {
        let mut r = KeyResult::zero(KeyStatus::FiniteSizeDominated, Some(terms));
        r.raw_length = raw;
        return Ok(r);
    }
    Ok(KeyResult {
        length_bits,
        raw_length: raw,
        rate_bps: length / tally.duration_s,
        status: KeyStatus::Secure,
        terms: Some(terms),
    })
}

/// Inputs of the asymptotic rate. The multi-photon factor of each basis uses
/// that basis' preparation probability, matching the finite-key terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GllpInputs<T> {
    pub rep_rate: T,
    pub p_det: T,
    pub p_m: T,
    pub p_key: T,
    pub p_check: T,
    /// Fraction of detections sifted into the key basis.
    pub sift_factor: T,
    pub e_key: T,
    pub e_check: T,
    pub f_ec: T,
}

/// GLLP asymptotic secure rate in bits per second, clamped at zero.
pub fn gllp_asymptotic_rate<T: Real>(inputs: &GllpInputs<T>) -> Result<T> {
    let g = inputs;
    if !(g.p_det > T::zero()) {
        return Err(invalid("p_det must be > 0"));
    }
    let a_key = multiphoton_correction(g.p_m, g.p_det, g.p_key)?;
    let a_check = multiphoton_correction(g.p_m, g.p_det, g.p_check)?;
    if a_key <= T::zero() || a_check <= T::zero() {
        return Ok(T::zero());
    }
    let phase = (g.e_check / a_check).min(T::half());
    let per_bit = a_key * (T::one() - binary_entropy(phase)?) - g.f_ec * binary_entropy(g.e_key)?;
    Ok((g.rep_rate * g.p_det * g.sift_factor * per_bit).max(T::zero()))
}

/// Single-basis form with `A = 1 - p_m / p_det` and one QBER `e`.
pub fn gllp_rate<T: Real>(rep_rate: T, p_det: T, p_m: T, e: T, f_ec: T, sift_factor: T) -> Result<T> {
    gllp_asymptotic_rate(&GllpInputs {
        rep_rate,
        p_det,
        p_m,
        p_key: T::one(),
        p_check: T::one(),
        sift_factor,
        e_key: e,
        e_check: e,
        f_ec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_reference_points() {
        assert_eq!(binary_entropy(0.5f64).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0f64).unwrap(), 0.0);
        assert!((binary_entropy(0.05f64).unwrap() - 0.286_396_957_115_956).abs() < 1e-14);
        assert!(binary_entropy(1.5f64).is_err());
        assert!((binary_entropy(0.05f32).unwrap() - 0.286_397).abs() < 1e-5);
    }

    #[test]
    fn multiphoton_examples() {
        assert_eq!(multiphoton_correction(0.0, 1e-5, 0.5).unwrap(), 1.0);
        let a: f64 = multiphoton_correction(2.835e-8, 1.0e-5, 0.997).unwrap();
        assert!((a - (1.0 - 2.835e-3 / 0.997)).abs() < 1e-15);
        assert!((a - 0.99716).abs() < 1e-5);
        assert!(multiphoton_correction(0.3, 0.6, 0.5f64).unwrap().abs() < 1e-15);
        assert!(multiphoton_correction(1e-8, 0.0, 0.5f64).is_err());
    }

    #[test]
    fn delta_examples() {
        let d: f64 = fluctuation_delta(1e6, 1e4, 1e-12).unwrap();
        assert!((d - 0.053_488_569_545_699_5).abs() < 1e-14);
        assert!(fluctuation_delta(0.0, 1.0, 1e-12f64).is_err());
        let n = 1e8f64;
        let equal = fluctuation_delta(n, n, 1e-12).unwrap();
        let simplified = (2.0 * (n + 1.0) / (n * n) * (2e12f64).ln()).sqrt();
        assert!((equal - simplified).abs() < 1e-15);
        assert!((equal - (2.0 * (2e12f64).ln() / n).sqrt()).abs() / equal < 1e-6);
    }

    #[test]
    fn delta_decreases_along_doubling_ladder() {
        let mut prev = f64::INFINITY;
        let mut nx = 10.0;
        while nx < 1e12 {
            let d = fluctuation_delta(100.0 * nx, nx, 1e-12).unwrap();
            assert!(d < prev);
            prev = d;
            nx *= 2.0;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn log_term_value() {
        assert!((log_term(1e-12f64, 1e-12) - 120.589_411_415_945_04).abs() < 1e-11);
    }

    fn tally(n_key: f64, n_check: f64, e_key: f64, e_check: f64, p_m: f64) -> KeyTally<f64> {
        KeyTally { n_key, n_check, e_key, e_check, p_key: 0.5, p_check: 0.5, p_det: 1e-5, p_m, duration_s: 1.0 }
    }

    #[test]
    fn noiseless_key_length() {
        let r = secure_key_length(&tally(1e6, 1e4, 0.0, 0.0, 0.0), &SecurityParams::reference()).unwrap();
        assert_eq!(r.status, KeyStatus::Secure);
        assert_eq!(r.length_bits, 698_844);
        assert!((r.raw_length - 698_844.146_182_167).abs() < 1e-6);
    }

    #[test]
    fn zero_and_flagged_cases() {
        let p = SecurityParams::reference();
        assert_eq!(secure_key_length(&tally(0.0, 10.0, 0.0, 0.0, 0.0), &p).unwrap().status, KeyStatus::NoCounts);
        assert_eq!(secure_key_length(&tally(10.0, 0.0, 0.0, 0.0, 0.0), &p).unwrap().status, KeyStatus::NoCheckSamples);
        let r = secure_key_length(&tally(1e6, 1e4, 0.01, 0.01, 6e-6), &p).unwrap();
        assert_eq!(r.status, KeyStatus::MultiPhotonDominated);
        assert!(r.terms.unwrap().a_key <= 0.0);
        let r = secure_key_length(&tally(1e6, 1e4, 0.01, 0.49, 0.0), &p).unwrap();
        assert_eq!(r.status, KeyStatus::NoiseDominated);
        assert_eq!(r.terms.unwrap().phase_error, 0.5);
        let r = secure_key_length(&tally(500.0, 500.0, 0.01, 0.01, 0.0), &p).unwrap();
        assert_eq!(r.status, KeyStatus::FiniteSizeDominated);
        assert_eq!(r.length_bits, 0);
    }

    #[test]
    fn gllp_examples() {
        let r: f64 = gllp_rate(80e6, 1e-5, 0.0, 0.0, 1.16, 0.5).unwrap();
        assert!((r - 400.0).abs() < 1e-9);
        assert_eq!(gllp_rate(80e6, 1e-5, 0.0, 0.2, 1.16, 0.5f64).unwrap(), 0.0);
    }

    #[test]
    fn f32_and_f64_agree() {
        let t64 = tally(1e6, 1e4, 0.017, 0.083, 2.8e-8);
        let t32 = KeyTally {
            n_key: 1e6f32,
            n_check: 1e4,
            e_key: 0.017,
            e_check: 0.083,
            p_key: 0.5,
            p_check: 0.5,
            p_det: 1e-5,
            p_m: 2.8e-8,
            duration_s: 1.0,
        };
        let a = secure_key_length(&t64, &SecurityParams::reference()).unwrap().raw_length;
        let b = secure_key_length(&t32, &SecurityParams::reference()).unwrap().raw_length;
        assert!(((a - b as f64) / a).abs() < 1e-4);
    }
}
