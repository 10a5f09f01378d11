//! Scalar abstraction for the numeric core.
//!
//! Every quantity in this crate (probabilities, placement fractions, rates,
//! storage) is a dimensionless real, so the whole library is generic over a
//! floating point scalar. `f64` is the intended default and the only type the
//! CLI exposes; `f32` works end to end with proportionally wider tolerances.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar usable throughout the crate.
///
/// The bound set is the intersection of what the evaluators need (float ops
/// via `Float`, literal conversion via `FromPrimitive`/`ToPrimitive`) and
/// what serialization and threading require.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Widens an `f64`-calibrated tolerance to this scalar's precision.
    ///
    /// Tolerances quoted in contracts (1e-9, 1e-12) are stated for double
    /// precision. Scaling by the epsilon ratio keeps invariant checks
    /// meaningful for narrower scalars without loosening the `f64` case.
    fn tol(base: f64) -> Self {
        let ratio = Self::epsilon().to_f64().unwrap_or(f64::EPSILON) / f64::EPSILON;
        real(base * ratio.max(1.0))
    }
}

impl Real for f64 {}
impl Real for f32 {}

/// Converts an `f64` literal into the working scalar.
///
/// Panics only if the scalar cannot represent ordinary finite constants,
/// which no implementor of [`Real`] exhibits.
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite f64 constant must convert into the scalar type")
}

/// Converts a count into the working scalar.
pub fn real_usize<T: Real>(x: usize) -> T {
    T::from_usize(x).expect("count must convert into the scalar type")
}

/// Pairwise summation. Error grows with log(n) rather than n, which keeps
/// long recovery and probability accumulations inside the stated tolerances.
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tol_is_identity_for_f64() {
        assert_eq!(<f64 as Real>::tol(1e-9), 1e-9);
    }

    #[test]
    fn tol_widens_for_f32() {
        assert!(<f32 as Real>::tol(1e-9) > 1e-9f32);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (1..=9).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 45.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
        assert_eq!(pairwise_sum(&[3.5f64]), 3.5);
    }
}
