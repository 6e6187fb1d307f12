//! Scalar abstraction shared by the numerical core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar the estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count into this scalar type.
    fn from_count(n: usize) -> Self {
        <Self as NumCast>::from(n).expect("count representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn l2_norm<F: Scalar>(v: &[F]) -> F {
    dot(v, v).sqrt()
}

/// Numerically stable logistic function with `logistic(t) + logistic(-t) == 1` exactly.
pub fn logistic<F: Scalar>(t: F) -> F {
    if t >= F::zero() {
        F::one() / (F::one() + (-t).exp())
    } else {
        // 1 - w is exact for w in [1/2, 1]
        F::one() - F::one() / (F::one() + t.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_symmetry_is_exact() {
        for &t in &[0.0, 0.3, -0.3, 1.7, 12.5, -40.0, 1e-9] {
            let t: f64 = t;
            assert_eq!(logistic(t) + logistic(-t), 1.0, "t = {t}");
        }
        assert_eq!(logistic(0.0f32), 0.5);
    }

    #[test]
    fn lit_roundtrips() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::from_count(7), 7.0);
    }
}
