//! Simulation and analysis toolkit for polarization-encoded BB84 over
//! dispersive fiber.
//!
//! The geometry, channel and key-rate code is generic over [`scalar::Real`]
//! (`f32` or `f64`); the aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod emitter;
pub mod error;
pub mod keyrate;
pub mod linalg;
pub mod polarization;
pub mod protocol;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Stokes = polarization::StokesVector<f64>;
pub type Pmd = channel::PmdVector<f64>;
pub type Segment = channel::FiberSegment<f64>;
pub type Channel = channel::FiberChannel<f64>;
pub type Trajectory = Vec<channel::TrajectoryPoint<f64>>;
pub type Arc = channel::ArcFit<f64>;
pub type Spectrum = emitter::EmitterSpectrum<f64>;
pub type Security = keyrate::SecurityParams<f64>;
pub type Tally = keyrate::KeyTally<f64>;
pub type KeyOutcome = keyrate::KeyResult<f64>;
