//! Simulation and analysis of multiplexed entangled photon-pair sources based
//! on spontaneous four-wave mixing in fiber.
//!
//! * [`quantum`]: two-qubit states, projectors, Born rule and fidelity,
//!   generic over the [`Real`] scalar.
//! * [`source`]: emitted states, pair/noise rates and the DWDM channel plan.
//! * [`sim`]: pulse-train Monte Carlo of analyzers and detectors.
//! * [`analysis`]: visibility fits, CAR, CHSH, tomography and calibration.
//!
//! The `*64` aliases below fix the scalar to `f64`, which is what the
//! simulation and analysis layers use.

// `!(x > 0.0)` is how NaN gets rejected, and the 4x4 matrix code reads best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod quantum;
pub mod scalar;
pub mod sim;
pub mod source;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PureState64 = quantum::PureState2Q<f64>;
pub type DensityMatrix64 = quantum::DensityMatrix<f64>;
pub type Projector64 = quantum::Projector<f64>;
pub type PureState32 = quantum::PureState2Q<f32>;
pub type DensityMatrix32 = quantum::DensityMatrix<f32>;
pub type Projector32 = quantum::Projector<f32>;
