//! Floating-point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};
use serde::Serialize;

/// Floating point: f32 or f64.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Serialize + Send + Sync + 'static
{
    /// Lossless-enough conversion from f64 literals and config values.
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    /// Conversion from a count or index.
    fn of_usize(v: usize) -> Self {
        <Self as NumCast>::from(v).expect("usize is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }

    /// Linear interpolation between `a` and `b`, clamped to the segment so
    /// rounding never leaves `[min(a, b), max(a, b)]`.
    fn lerp(a: Self, b: Self, t: Self) -> Self {
        let v = a * (Self::one() - t) + b * t;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        v.max(lo).min(hi)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sum that does not depend on the order of `values`: terms are added in
/// ascending order. Used wherever a permuted input must produce bit-identical
/// aggregates.
pub fn order_invariant_sum<T: Scalar>(values: &[T]) -> T {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.into_iter().fold(T::zero(), |acc, v| acc + v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lerp_endpoints_exact() {
        assert_eq!(f64::lerp(0.3, 0.7, 0.0), 0.3);
        assert_eq!(f64::lerp(0.3, 0.7, 1.0), 0.7);
        assert_eq!(f32::lerp(2.0, 1.0, 0.5), 1.5);
    }

    #[test]
    fn order_invariant_sum_ignores_permutation() {
        let a = [1e16f64, 1.0, -1e16, 3.5, 1e-3];
        let b = [3.5f64, -1e16, 1e-3, 1.0, 1e16];
        assert_eq!(order_invariant_sum(&a).to_bits(), order_invariant_sum(&b).to_bits());
    }
}
