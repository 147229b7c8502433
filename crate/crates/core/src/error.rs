use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("grid functions live on different meshes")]
    MeshMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("diffusion coefficient {value} at element {element} violates the positive floor")]
    NonPositiveDiffusion { element: usize, value: f64 },

    #[error("singular or ill-conditioned system (pivot ratio estimate {pivot_ratio:e})")]
    SingularSystem { pivot_ratio: f64 },

    #[error("conjugate gradient did not converge after {iterations} iterations (residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("state solver did not converge: {0}")]
    StateNotConverged(String),

    #[error("point is not stationary: first-order residual {residual:e} exceeds {tolerance:e}")]
    NotStationary { residual: f64, tolerance: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
