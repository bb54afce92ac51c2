//! Sparse symmetric storage, fill-reducing ordering and Cholesky factorization.

mod cholesky;
mod ordering;
mod sparse;

pub use cholesky::SparseCholesky;
pub use ordering::approximate_minimum_degree;
pub use sparse::{axpy, dot, SparseSym};
