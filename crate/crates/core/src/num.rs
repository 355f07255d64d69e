//! Scalar abstraction so the whole pipeline runs at f32 or f64.
//!
//! Training and the CLI default to f32; the gradient and oracle test suites
//! instantiate f64. Concrete aliases for the main types live at the crate
//! root.

/// Floating-point scalar for all geometry, rendering, and optimization math.
pub trait Real:
    nalgebra::RealField
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Copy
    + Default
    + Send
    + Sync
{
    /// Convert an f64 literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy conversion back to f64 (for reporting and serialization).
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    fn finite(self) -> bool;
}

impl Real for f32 {
    #[inline]
    fn finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    #[inline]
    fn finite(self) -> bool {
        f64::is_finite(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lit_round_trips() {
        assert_eq!(<f64 as Real>::lit(0.3), 0.3);
        assert_eq!(<f32 as Real>::lit(0.5), 0.5f32);
    }

    #[test]
    fn finite_flags_nan_and_inf() {
        assert!(1.0f64.finite());
        assert!(!f64::NAN.finite());
        assert!(!f32::INFINITY.finite());
    }
}
