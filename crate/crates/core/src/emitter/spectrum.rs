use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Line shape of the emission spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralShape {
    Rectangular,
    #[default]
    Gaussian,
    Lorentzian,
}

impl fmt::Display for SpectralShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rectangular => "rectangular",
            Self::Gaussian => "gaussian",
            Self::Lorentzian => "lorentzian",
        })
    }
}

impl FromStr for SpectralShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rectangular" | "rect" => Ok(Self::Rectangular),
            "gaussian" => Ok(Self::Gaussian),
            "lorentzian" => Ok(Self::Lorentzian),
            other => Err(invalid(format!("unknown spectral shape {other:?}"))),
        }
    }
}

/// Gaussian and Lorentzian lines are truncated at this many FWHM either side
/// of the center.
const TRUNCATION_FWHM: f64 = 3.0;

/// Default number of quadrature nodes for spectral averages.
pub const DEFAULT_QUADRATURE_NODES: usize = 401;

/// Emission spectrum in wavelength (nm). A zero FWHM is a monochromatic line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterSpectrum<T> {
    pub center: T,
    pub fwhm: T,
    #[serde(default)]
    pub shape: SpectralShape,
}

impl<T: Real> EmitterSpectrum<T> {
    pub fn new(center: T, fwhm: T, shape: SpectralShape) -> Result<Self> {
        let s = Self { center, fwhm, shape };
        s.validate()?;
        Ok(s)
    }

    pub fn monochromatic(center: T) -> Self {
        Self { center, fwhm: T::zero(), shape: SpectralShape::Rectangular }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center > T::zero()) || !self.center.is_finite() {
            return Err(invalid("spectrum center must be a positive wavelength"));
        }
        if !(self.fwhm >= T::zero()) || !self.fwhm.is_finite() {
            return Err(invalid("spectrum fwhm must be finite and >= 0"));
        }
        Ok(())
    }

    /// Wavelength interval carrying the whole (truncated) density.
    pub fn support(&self) -> (T, T) {
        let half = match self.shape {
            SpectralShape::Rectangular => self.fwhm * T::half(),
            _ => self.fwhm * T::lit(TRUNCATION_FWHM),
        };
        (self.center - half, self.center + half)
    }

    /// Normalized probability density (per nm) over the support.
    pub fn pdf(&self, wavelength: T) -> T {
        let (lo, hi) = self.support();
        if self.fwhm == T::zero() || wavelength < lo || wavelength > hi {
            return T::zero();
        }
        let x = wavelength - self.center;
        match self.shape {
            SpectralShape::Rectangular => T::one() / self.fwhm,
            SpectralShape::Gaussian => {
                let sigma = self.gaussian_sigma();
                let z = x / sigma;
                (-(z * z) * T::half()).exp() / (sigma * T::TAU().sqrt())
            }
            SpectralShape::Lorentzian => {
                let gamma = self.fwhm * T::half();
                let u = x / gamma;
                let mass = T::two() / T::PI() * T::lit(2.0 * TRUNCATION_FWHM).atan();
                T::one() / (T::PI() * gamma * (T::one() + u * u)) / mass
            }
        }
    }

    fn gaussian_sigma(&self) -> T {
        self.fwhm / (T::lit(8.0) * T::LN_2()).sqrt()
    }

    /// Composite-Simpson quadrature nodes `(wavelength, weight)` whose weights
    /// sum to one. `nodes` is rounded up to an odd count of at least 3.
    pub fn quadrature(&self, nodes: usize) -> Vec<(T, T)> {
        if self.fwhm == T::zero() {
            return vec![(self.center, T::one())];
        }
        let n = if nodes < 3 { 3 } else { nodes | 1 };
        let (lo, hi) = self.support();
        let step = (hi - lo) / T::from_usize_lossy(n - 1);
        let mut out: Vec<(T, T)> = (0..n)
            .map(|i| {
                let lambda = lo + step * T::from_usize_lossy(i);
                let simpson = if i == 0 || i == n - 1 {
                    T::one()
                } else if i % 2 == 1 {
                    T::lit(4.0)
                } else {
                    T::two()
                };
                (lambda, simpson * step / T::lit(3.0) * self.pdf(lambda))
            })
            .collect();
        let total = out.iter().fold(T::zero(), |acc, (_, w)| acc + *w);
        for node in &mut out {
            node.1 = node.1 / total;
        }
        out
    }

    /// Draws one wavelength from the configured line shape.
    pub fn sample_wavelength<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        if self.fwhm == T::zero() {
            return self.center;
        }
        let fwhm = self.fwhm.to_f64_lossy();
        let offset = match self.shape {
            SpectralShape::Rectangular => (rng.random::<f64>() - 0.5) * fwhm,
            SpectralShape::Gaussian => {
                let sigma = self.gaussian_sigma().to_f64_lossy();
                let limit = TRUNCATION_FWHM * fwhm;
                loop {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = z * sigma;
                    if x.abs() <= limit {
                        break x;
                    }
                }
            }
            SpectralShape::Lorentzian => {
                let gamma = 0.5 * fwhm;
                let edge = (2.0 * TRUNCATION_FWHM).atan();
                let u: f64 = rng.random();
                gamma * ((2.0 * u - 1.0) * edge).tan()
            }
        };
        self.center + T::lit(offset)
    }
}
