use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Zero-vector threshold on the Euclidean norm.
pub const EPS_NORM: f64 = 1e-12;

/// Dense column vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T>(pub Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Vector(values)
    }

    /// Builds a vector, rejecting NaN or infinite entries.
    pub fn try_new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector".into()));
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![T::zero(); dim])
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Vector(values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.dim() != other.dim() {
            return Err(Error::dim("dot product", self.dim(), other.dim()));
        }
        Ok(dot(&self.0, &other.0))
    }

    pub fn scale(&self, c: T) -> Self {
        Vector(self.0.iter().map(|&v| v * c).collect())
    }

    pub fn length_normalize(&self) -> Result<Self> {
        length_normalize(self)
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Vector(v)
    }
}

/// Left-to-right inner product.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn check_zero<T: Scalar>(n: T) -> Result<()> {
    if !n.is_finite() {
        return Err(Error::NonFinite("vector norm".into()));
    }
    if n <= T::lit(EPS_NORM) {
        return Err(Error::ZeroVector {
            norm: n.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Scales `v` to unit Euclidean norm.
pub fn length_normalize<T: Scalar>(v: &Vector<T>) -> Result<Vector<T>> {
    let n = v.norm();
    check_zero(n)?;
    Ok(Vector(v.0.iter().map(|&x| x / n).collect()))
}

/// Cosine of the angle between `a` and `b`.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::dim("cosine similarity", a.len(), b.len()));
    }
    let na = norm(a);
    let nb = norm(b);
    check_zero(na)?;
    check_zero(nb)?;
    Ok(dot(a, b) / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let u = length_normalize(&Vector::<f64>::from_f64(&[3.0, 4.0])).unwrap();
        assert!((u[0] - 0.6).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        let u = length_normalize(&Vector::<f64>::from_f64(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(u.as_slice(), &[1.0, 0.0, 0.0]);
        let err = length_normalize(&Vector::<f64>::from_f64(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::ZeroVector { .. }));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0f64, 0.0], &[1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-8);
        assert!(matches!(
            cosine_similarity(&[1.0f64, 0.0], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine_similarity(&[0.0f64, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let u = length_normalize(&Vector::<f32>::from_f64(&[3.0, 4.0])).unwrap();
        assert!((u[1] - 0.8).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Vector::try_new(vec![1.0, f64::NAN]).is_err());
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..16).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(v in nonzero_vec(), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let s = cosine_similarity(&v, &scaled).unwrap();
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn cosine_is_bounded_and_symmetric(
            (a, b) in (1usize..12).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            ))
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let ab = cosine_similarity(&a, &b).unwrap();
            let ba = cosine_similarity(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn normalize_is_idempotent(v in nonzero_vec()) {
            let once = length_normalize(&Vector(v)).unwrap();
            let twice = length_normalize(&once).unwrap();
            prop_assert!((once.norm() - 1.0).abs() <= 1e-12);
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }
    }
}
