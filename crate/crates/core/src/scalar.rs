//! Scalar abstraction for the clock math.
//!
//! Clock evaluation and extremum analysis are generic over [`Scalar`] so the
//! same model can be run in `f32` or `f64`. Everything that touches simulated
//! wall-clock time goes through integer picoseconds instead (see [`crate::units`]).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type usable for clock parameters and offsets.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; clock parameters are configured in `f64`.
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts to every float scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
