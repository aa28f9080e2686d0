//! Scalar abstraction for the numerical core.
//!
//! All algebra and solver code is generic over [`Real`]; the crate root
//! exposes `f64` aliases for the concrete types the CLI works with.

use nalgebra as na;
use num_traits as nt;

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real: Copy + nt::FloatConst + nt::FromPrimitive + na::RealField {
    /// Converts a configuration constant (always written as `f64`) into `Self`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion_roundtrip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(0.25), 0.25);
    }
}
