//! Floating-point abstraction shared by the numeric stages.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for embeddings, alignment scores and projections.
///
/// Implemented for `f32` and `f64`. Values that cross module boundaries in
/// serialized form (bead similarities, report statistics) are widened to `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn widen(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    let na = norm(a);
    let nb = norm(b);
    if na == F::zero() || nb == F::zero() {
        return F::zero();
    }
    dot(a, b) / (na * nb)
}

/// Scales `v` in place to unit L2 norm. Returns false if `v` is all zeros.
pub fn normalize_in_place<F: Scalar>(v: &mut [F]) -> bool {
    let n = norm(v);
    if n == F::zero() {
        return false;
    }
    for x in v.iter_mut() {
        *x = *x / n;
    }
    true
}
