use crate::emitter::EmitterSpectrum;
use crate::error::{invalid, Result};
use crate::polarization::{misalignment_error, StokesVector};
use crate::scalar::Real;

use super::FiberChannel;

/// Speed of light in vacuum, nm/ps.
pub const SPEED_OF_LIGHT_NM_PER_PS: f64 = 299_792.458;

const BAND_NM: (f64, f64) = (1000.0, 1700.0);

pub(crate) fn delta_omega_unchecked<T: Real>(wavelength: T, reference: T) -> T {
    T::TAU() * T::lit(SPEED_OF_LIGHT_NM_PER_PS) * (T::one() / wavelength - T::one() / reference)
}

/// Angular-frequency offset `2 pi c (1/lambda - 1/lambda0)` in rad/ps.
pub fn delta_omega<T: Real>(wavelength: T, reference: T) -> Result<T> {
    let band = T::lit(BAND_NM.0)..T::lit(BAND_NM.1);
    for w in [wavelength, reference] {
        if !(w > band.start && w < band.end) {
            return Err(invalid(format!("wavelength {w} nm outside the {}-{} nm band", BAND_NM.0, BAND_NM.1)));
        }
    }
    Ok(delta_omega_unchecked(wavelength, reference))
}

/// Differential group delay (ps) from an arc angle swept over `span` nm centered on `center`.
pub fn estimate_dgd<T: Real>(central_angle: T, span: T, center: T) -> Result<T> {
    if !(span > T::zero()) {
        return Err(invalid("wavelength span must be > 0"));
    }
    let half = span * T::half();
    let dw = delta_omega(center - half, center + half)?.abs();
    Ok(central_angle.abs() / dw)
}

/// PMD parameter in ps/sqrt(km).
pub fn pmd_parameter<T: Real>(dgd: T, length_km: T) -> Result<T> {
    if !(length_km > T::zero()) {
        return Err(invalid("length must be > 0 km"));
    }
    Ok(dgd / length_km.sqrt())
}

/// Spectrally averaged error probability of `state` through `channel`, relative
/// to the channel output at its reference wavelength.
pub fn qber_from_pmd<T: Real>(state: &StokesVector<T>, channel: &FiberChannel<T>, spectrum: &EmitterSpectrum<T>) -> T {
    qber_from_pmd_with_nodes(state, channel, spectrum, crate::emitter::DEFAULT_QUADRATURE_NODES)
}

pub fn qber_from_pmd_with_nodes<T: Real>(
    state: &StokesVector<T>,
    channel: &FiberChannel<T>,
    spectrum: &EmitterSpectrum<T>,
    nodes: usize,
) -> T {
    let reference = channel.apply(state, channel.reference_wavelength);
    spectrum
        .quadrature(nodes.max(201))
        .into_iter()
        .fold(T::zero(), |acc, (lambda, w)| acc + w * misalignment_error(&channel.apply(state, lambda), &reference))
}
