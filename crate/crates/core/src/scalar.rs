//! Scalar abstraction the pricing kernels are written against.

use num_traits::Float;

/// Floating-point scalar for the pure pricing math in [`crate::math`].
///
/// Everything downstream of the kernels (strategies, protocol, harness) is
/// pinned to `f64` via the aliases at the crate root; the kernels stay
/// generic so they can be checked at reduced precision too.
pub trait Real: Float + core::fmt::Debug + Send + Sync + 'static {
    /// Lossy conversion from `f64`, used for constants and thresholds.
    fn of(v: f64) -> Self;
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
}
