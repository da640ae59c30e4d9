use serde::{Deserialize, Serialize};

use crate::{CoreError, Result, Scalar};

/// Fixed-length dense vector of model coordinates.
///
/// Constructors reject non-finite entries. Arithmetic between vectors of
/// different lengths is an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<S>(Vec<S>);

impl<S: Scalar> Vector<S> {
    pub fn new(entries: Vec<S>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("vector entries"));
        }
        Ok(Self(entries))
    }

    pub fn from_slice(entries: &[S]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![S::zero(); len])
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> S) -> Self {
        Self((0..len).map(f).collect())
    }

    /// Wraps entries produced by arithmetic on already-validated vectors.
    /// Callers that can overflow check [`Vector::is_finite`] at their boundary.
    pub(crate) fn from_raw(entries: Vec<S>) -> Self {
        Self(entries)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, S> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<S> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(CoreError::DimensionMismatch { expected, found: self.len() });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<S> {
        other.check_len(self.len())?;
        Ok(self.dot_unchecked(other))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, other: &Self) -> S {
        self.0.iter().zip(&other.0).fold(S::zero(), |acc, (&a, &b)| acc + a * b)
    }

    #[inline]
    pub fn norm2_sq(&self) -> S {
        self.dot_unchecked(self)
    }

    #[inline]
    pub fn norm2(&self) -> S {
        self.norm2_sq().sqrt()
    }

    /// Euclidean distance `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> Result<S> {
        other.check_len(self.len())?;
        Ok(self.distance_sq_unchecked(other).sqrt())
    }

    #[inline]
    pub(crate) fn distance_sq_unchecked(&self, other: &Self) -> S {
        self.0.iter().zip(&other.0).fold(S::zero(), |acc, (&a, &b)| {
            let d = a - b;
            acc + d * d
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        other.check_len(self.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.check_len(self.len())?;
        Ok(Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect()))
    }

    pub fn scaled(&self, factor: S) -> Self {
        Self(self.0.iter().map(|&a| a * factor).collect())
    }

    /// `self += factor · other`
    pub fn axpy(&mut self, factor: S, other: &Self) -> Result<()> {
        other.check_len(self.len())?;
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a = *a + factor * b;
        }
        Ok(())
    }

    /// Arithmetic mean, accumulated in the order given.
    pub fn mean<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Self>,
        S: 'a,
    {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| CoreError::config("mean of an empty set of vectors"))?;
        let mut acc = first.clone();
        let mut count = 1usize;
        for v in iter {
            acc.axpy(S::one(), v)?;
            count += 1;
        }
        Ok(acc.scaled(S::one() / S::count(count)))
    }
}

impl<S> std::ops::Index<usize> for Vector<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

/// `Σ aᵢ bᵢ`; lengths must match.
pub fn dot<S: Scalar>(a: &Vector<S>, b: &Vector<S>) -> Result<S> {
    a.dot(b)
}

/// Euclidean norm.
pub fn norm2<S: Scalar>(a: &Vector<S>) -> S {
    a.norm2()
}
