//! Scalar abstraction shared by the state algebra.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating point type the quantum algebra is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
