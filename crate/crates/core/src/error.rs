use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element {0} is degenerate or inverted")]
    DegenerateElement(usize),

    #[error("element id {0} out of range")]
    InvalidElement(usize),

    #[error("refinement did not terminate: {0}")]
    RefinementFailed(String),

    #[error("non-finite coefficient value at ({x}, {y})")]
    NonFiniteCoefficient { x: f64, y: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigensolver did not converge: {0}")]
    NotConverged(String),

    #[error("cluster Gram matrix is singular")]
    SingularCluster,

    #[error("cluster identity lost: {0}")]
    ClusterIdentityLost(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
