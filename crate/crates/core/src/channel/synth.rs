use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{invalid, Result};
use crate::polarization::StokesVector;
use crate::scalar::Real;

use super::{FiberChannel, FiberSegment};

/// Default reference wavelength of synthesized channels, nm.
pub const DEFAULT_REFERENCE_NM: f64 = 1310.0;

/// Random-waveplate fiber: `n_segments` sections with independent uniformly
/// distributed axes and equal delays `pmd_param * sqrt(length / n)`, so the
/// ensemble RMS of the total DGD is `pmd_param * sqrt(length)`.
///
/// The returned channel is lossless with a 1310 nm reference; use
/// [`FiberChannel::with_loss`] and [`FiberChannel::with_reference`] to adjust.
pub fn synthesize_channel<T: Real>(
    pmd_param: T,
    length_km: T,
    n_segments: usize,
    seed: u64,
) -> Result<FiberChannel<T>> {
    if n_segments == 0 {
        return Err(invalid("a synthesized channel needs at least one segment"));
    }
    if !(pmd_param >= T::zero()) || !(length_km > T::zero()) {
        return Err(invalid("need pmd_param >= 0 and length_km > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dgd = pmd_param * length_km.sqrt() / T::from_usize_lossy(n_segments).sqrt();
    let segments = (0..n_segments)
        .map(|_| {
            let [x, y, z]: [f64; 3] = UnitSphere.sample(&mut rng);
            let axis = StokesVector::new(T::lit(x), T::lit(y), T::lit(z));
            // renormalize in the target precision
            FiberSegment { axis: axis.unit().expect("sphere sample is nonzero"), dgd }
        })
        .collect();
    FiberChannel::new(segments, T::zero(), length_km, T::lit(DEFAULT_REFERENCE_NM))
}
