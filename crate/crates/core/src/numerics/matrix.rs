use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Vector;
use crate::{CoreError, Result, Scalar};

/// Dense row-major `rows × cols` matrix.
///
/// Serialized as an array of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(CoreError::DimensionMismatch { expected: cols, found: row.len() });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    /// `A·x`
    pub fn matvec(&self, x: &Vector<S>) -> Result<Vector<S>> {
        x.check_len(self.cols)?;
        let xs = x.as_slice();
        let out = (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(xs)
                    .fold(S::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect();
        Ok(Vector::from_raw(out))
    }

    /// `Aᵀ·y`
    pub fn tr_matvec(&self, y: &Vector<S>) -> Result<Vector<S>> {
        y.check_len(self.rows)?;
        let mut out = vec![S::zero(); self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * yi;
            }
        }
        Ok(Vector::from_raw(out))
    }

    /// `AᵀA`, a `cols × cols` symmetric matrix.
    pub fn gram(&self) -> Self {
        let d = self.cols;
        let mut g = vec![S::zero(); d * d];
        for i in 0..self.rows {
            let row = self.row(i);
            for p in 0..d {
                for q in p..d {
                    g[p * d + q] = g[p * d + q] + row[p] * row[q];
                }
            }
        }
        for p in 0..d {
            for q in 0..p {
                g[p * d + q] = g[q * d + p];
            }
        }
        Self { rows: d, cols: d, data: g }
    }

    /// Lower Cholesky factor of a symmetric positive-definite matrix, or
    /// `None` when a pivot is not strictly positive.
    fn cholesky(&self) -> Option<Vec<S>> {
        let n = self.rows;
        let mut l = vec![S::zero(); n * n];
        for j in 0..n {
            let mut diag = self.get(j, j);
            for k in 0..j {
                diag = diag - l[j * n + k] * l[j * n + k];
            }
            if !(diag > S::zero()) {
                return None;
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Some(l)
    }

    /// Smallest singular value of `self`, estimated by inverse power
    /// iteration on `AᵀA` through its Cholesky factor. Returns zero when the
    /// Gram matrix is not numerically positive definite.
    pub fn smallest_singular_value(&self) -> S {
        let gram = self.gram();
        let n = gram.rows;
        if n == 0 {
            return S::zero();
        }
        let Some(l) = gram.cholesky() else {
            return S::zero();
        };
        let solve = |rhs: &[S]| -> Vec<S> {
            // L z = rhs, then Lᵀ w = z
            let mut z = vec![S::zero(); n];
            for i in 0..n {
                let mut s = rhs[i];
                for k in 0..i {
                    s = s - l[i * n + k] * z[k];
                }
                z[i] = s / l[i * n + i];
            }
            let mut w = vec![S::zero(); n];
            for i in (0..n).rev() {
                let mut s = z[i];
                for k in (i + 1)..n {
                    s = s - l[k * n + i] * w[k];
                }
                w[i] = s / l[i * n + i];
            }
            w
        };
        // fixed, non-symmetric start so no eigenvector is systematically missed
        let mut v: Vec<S> = (0..n).map(|i| S::one() + S::lit(0.37) * S::count(i % 7)).collect();
        let mut lambda_inv = S::zero();
        for _ in 0..500 {
            let norm = v.iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
            for x in v.iter_mut() {
                *x = *x / norm;
            }
            let w = solve(&v);
            let next = v.iter().zip(&w).fold(S::zero(), |a, (&x, &y)| a + x * y);
            let converged = (next - lambda_inv).abs() <= S::lit(1e-12) * next.abs();
            lambda_inv = next;
            v = w;
            if converged {
                break;
            }
        }
        if !(lambda_inv > S::zero()) || !lambda_inv.is_finite() {
            return S::zero();
        }
        (S::one() / lambda_inv).sqrt()
    }
}

impl<S: Scalar> Serialize for Matrix<S> {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        let rows: Vec<&[S]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(serializer)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for Matrix<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<S>> = Vec::deserialize(deserializer)?;
        Matrix::from_rows(&rows).map_err(D::Error::custom)
    }
}
