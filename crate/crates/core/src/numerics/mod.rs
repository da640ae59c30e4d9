//! Dense linear algebra, reproducible random streams and finite differences.
//!
//! Sizes in this simulator are tiny (tens of coordinates, tens of rows), so
//! everything here is a plain row-major `Vec` with no BLAS behind it.

mod diff;
mod matrix;
mod stream;
mod vector;

pub use diff::finite_diff_gradient;
pub use matrix::Matrix;
pub use stream::{gaussian_vector, Lineage, RandomStream, StreamDomain};
pub use vector::{dot, norm2, Vector};
