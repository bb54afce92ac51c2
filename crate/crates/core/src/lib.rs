//! Adaptive finite element solver for clustered eigenvalues of second-order
//! elliptic operators on 2D polygonal domains.
//!
//! The loop is the classic Solve → Estimate → Mark → Refine cycle:
//!
//! - [`mesh`]: conforming triangulations refined by newest-vertex bisection,
//! - [`fem`]: P1/P2 Lagrange spaces and assembly of the stiffness and mass forms,
//! - [`eigsolve`]: shift-invert block Lanczos on top of a sparse Cholesky factorization,
//! - [`estimator`]: residual indicators and oscillations for clusters and source problems,
//! - [`marking`]: minimal-cardinality Dörfler marking,
//! - [`gap`]: energy-norm gap between an exact and a discrete eigenspace,
//! - [`problems`]: built-in model problems with analytic ground truth,
//! - [`driver`]: the adaptive loops, traces, slope fits and plots.

pub mod driver;
pub mod eigsolve;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod gap;
pub mod linalg;
pub mod marking;
pub mod mesh;
pub mod problems;
pub mod quadrature;

pub use error::{Error, Result};

/// Scalar field on the plane.
pub type ScalarFn = std::sync::Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Vector field on the plane (used for exact gradients).
pub type VectorFn = std::sync::Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;
