//! Single-photon source model: emission spectrum, photon-number statistics
//! and second-order correlation analysis.

mod g2;
mod photons;
mod spectrum;

pub use g2::{
    fit_g2_cw, g2_three_level, pulsed_g2, pulsed_g2_with_window, synthetic_cw_histogram, synthetic_pulsed_histogram,
    CwFitReport, G2Model, HistogramBin, PulsedG2, PulsedTrain,
};
pub(crate) use photons::draw as draw_photons;
pub use photons::{p_multi, PhotonStatistics};
pub use spectrum::{EmitterSpectrum, SpectralShape, DEFAULT_QUADRATURE_NODES};
