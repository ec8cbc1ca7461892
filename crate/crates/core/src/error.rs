use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid cavity: {0}")]
    InvalidCavity(String),

    #[error("invalid smearing: {0}")]
    InvalidSmearing(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not {kind} (deviation {deviation:.3e})")]
    Symmetry { kind: &'static str, deviation: f64 },

    /// G1 is singular: the state has no overlap with the vacuum.
    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("ill-conditioned aleph matrix (condition number {cond:.3e})")]
    IllConditioned { cond: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("determinant branch tracking failed: {0}")]
    Branch(String),

    #[error("dimension {dim} exceeds guard {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    #[error("quadrature did not converge: estimated error {estimate:.3e}")]
    Quadrature { estimate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
