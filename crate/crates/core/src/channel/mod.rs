//! Fiber quantum channel: attenuation and polarization mode dispersion.
//!
//! First-order PMD rotates the output Stokes vector about the PMD axis by
//! `dgd * dw`. Higher-order behaviour is emulated by concatenating
//! birefringent segments with independent axes. The frequency-independent
//! part of the fiber unitary is normalized out, so every channel is the
//! identity at its reference wavelength.

mod dispersion;
mod fit;
mod synth;

pub use dispersion::{
    delta_omega, estimate_dgd, pmd_parameter, qber_from_pmd, qber_from_pmd_with_nodes, SPEED_OF_LIGHT_NM_PER_PS,
};
pub use fit::{fit_arc, ArcFit};
pub use synth::synthesize_channel;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::polarization::StokesVector;
use crate::scalar::Real;

/// First-order PMD vector: unit axis (toward the slower principal state) and
/// differential group delay in ps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmdVector<T> {
    pub axis: StokesVector<T>,
    pub dgd: T,
}

impl<T: Real> PmdVector<T> {
    pub fn new(axis: StokesVector<T>, dgd: T) -> Result<Self> {
        if !axis.is_unit() {
            return Err(invalid("PMD axis must be a unit Stokes vector"));
        }
        if !(dgd >= T::zero()) {
            return Err(invalid("differential group delay must be >= 0"));
        }
        Ok(Self { axis, dgd })
    }

    /// Builds a PMD vector from its Cartesian form `dgd * axis`.
    pub fn from_vector(v: StokesVector<T>) -> Self {
        let dgd = v.norm();
        let axis =
            if dgd > T::zero() { v.scale(T::one() / dgd) } else { StokesVector::new(T::one(), T::zero(), T::zero()) };
        Self { axis, dgd }
    }

    pub fn as_vector(&self) -> StokesVector<T> {
        self.axis.scale(self.dgd)
    }
}

/// One birefringent section of fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSegment<T> {
    pub axis: StokesVector<T>,
    /// Differential group delay, ps.
    pub dgd: T,
}

impl<T: Real> FiberSegment<T> {
    pub fn new(axis: StokesVector<T>, dgd: T) -> Result<Self> {
        PmdVector::new(axis, dgd).map(|p| Self { axis: p.axis, dgd: p.dgd })
    }
}

/// Wavelength-tagged output state of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint<T> {
    pub wavelength: T,
    pub stokes: StokesVector<T>,
}

/// Ordered chain of birefringent segments plus loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberChannel<T> {
    pub segments: Vec<FiberSegment<T>>,
    pub loss_db: T,
    pub length_km: T,
    /// Wavelength (nm) at which the channel is normalized to the identity.
    pub reference_wavelength: T,
}

impl<T: Real> FiberChannel<T> {
    pub fn new(segments: Vec<FiberSegment<T>>, loss_db: T, length_km: T, reference_wavelength: T) -> Result<Self> {
        let ch = Self { segments, loss_db, length_km, reference_wavelength };
        ch.validate()?;
        Ok(ch)
    }

    /// Single-segment channel: exactly first-order PMD.
    pub fn first_order(pmd: PmdVector<T>, loss_db: T, length_km: T, reference_wavelength: T) -> Result<Self> {
        Self::new(vec![FiberSegment { axis: pmd.axis, dgd: pmd.dgd }], loss_db, length_km, reference_wavelength)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db >= T::zero()) || !self.loss_db.is_finite() {
            return Err(invalid("channel loss must be finite and >= 0 dB"));
        }
        if !(self.length_km > T::zero()) {
            return Err(invalid("channel length must be > 0 km"));
        }
        if !(self.reference_wavelength > T::zero()) {
            return Err(invalid("reference wavelength must be positive"));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !s.axis.is_unit() || !(s.dgd >= T::zero()) {
                return Err(invalid(format!("segment {i}: axis must be unit and dgd >= 0")));
            }
        }
        Ok(())
    }

    pub fn with_loss(mut self, loss_db: T) -> Self {
        self.loss_db = loss_db;
        self
    }

    pub fn with_reference(mut self, reference_wavelength: T) -> Self {
        self.reference_wavelength = reference_wavelength;
        self
    }

    pub fn transmittance(&self) -> T {
        T::lit(10.0).powf(-self.loss_db / T::lit(10.0))
    }

    /// Appends `next` after `self`: losses and lengths add, segments chain.
    pub fn concatenate(&self, next: &Self) -> Self {
        let mut segments = self.segments.clone();
        segments.extend(next.segments.iter().copied());
        Self {
            segments,
            loss_db: self.loss_db + next.loss_db,
            length_km: self.length_km + next.length_km,
            reference_wavelength: self.reference_wavelength,
        }
    }

    /// Output polarization at `wavelength` (nm).
    pub fn apply(&self, state: &StokesVector<T>, wavelength: T) -> StokesVector<T> {
        let dw = dispersion::delta_omega_unchecked(wavelength, self.reference_wavelength);
        self.segments.iter().fold(*state, |s, seg| s.rotate_unchecked(&seg.axis, seg.dgd * dw))
    }

    /// Total PMD vector at `wavelength`, accumulated through the segment chain.
    pub fn pmd_vector(&self, wavelength: T) -> PmdVector<T> {
        let dw = dispersion::delta_omega_unchecked(wavelength, self.reference_wavelength);
        let zero = StokesVector::new(T::zero(), T::zero(), T::zero());
        let total = self
            .segments
            .iter()
            .fold(zero, |acc, seg| acc.rotate_unchecked(&seg.axis, seg.dgd * dw) + seg.axis.scale(seg.dgd));
        PmdVector::from_vector(total)
    }

    /// Magnitude of the PMD vector at the reference wavelength, ps.
    pub fn total_dgd(&self) -> T {
        self.pmd_vector(self.reference_wavelength).dgd
    }
}

/// Free-function form of [`FiberChannel::apply`].
pub fn apply_channel<T: Real>(state: &StokesVector<T>, channel: &FiberChannel<T>, wavelength: T) -> StokesVector<T> {
    channel.apply(state, wavelength)
}

/// Output states at `n_points` uniformly spaced wavelengths from `start` to `end` (nm).
pub fn sweep_trajectory<T: Real>(
    channel: &FiberChannel<T>,
    state: &StokesVector<T>,
    start: T,
    end: T,
    n_points: usize,
) -> Result<Vec<TrajectoryPoint<T>>> {
    if n_points < 2 {
        return Err(invalid("a sweep needs at least 2 points"));
    }
    if !(start != end) || !start.is_finite() || !end.is_finite() {
        return Err(invalid("sweep range is empty"));
    }
    let step = (end - start) / T::from_usize_lossy(n_points - 1);
    Ok((0..n_points)
        .map(|i| {
            let wavelength = if i == n_points - 1 { end } else { start + step * T::from_usize_lossy(i) };
            TrajectoryPoint { wavelength, stokes: channel.apply(state, wavelength) }
        })
        .collect())
}
