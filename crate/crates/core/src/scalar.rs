//! Scalar abstraction for the analytic models and the estimator.
//!
//! Everything that computes with real numbers (collision statistics, charge
//! and timing models, the IFFT distance pipeline) is generic over [`Real`],
//! so the same code runs in `f32` or `f64`. The crate root exposes `f64`
//! aliases for the common case.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real scalar: `f32` or `f64`.
pub trait Real:
    num_traits::Float + num_traits::FromPrimitive + num_traits::NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for constants and fixture data.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("f64 constant representable in scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_convert_both_widths() {
        assert_eq!(f32::from_f64_lossy(1.25), 1.25f32);
        assert_eq!(f64::from_f64_lossy(299_792_458.0), 299_792_458.0);
    }
}
