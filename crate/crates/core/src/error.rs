use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix exponential rejected: 1-norm {norm:.3e} exceeds the supported bound {limit:.1e}")]
    ExpmOverflow { norm: f64, limit: f64 },
    #[error("matrix is singular (eigenvalue {0})")]
    Singular(Complex64),
    #[error("eigenvalue {0} lies on the branch cut of the principal logarithm")]
    BranchCut(Complex64),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("defective: no oblique projector ({0})")]
    NoObliqueProjector(String),
    #[error("not Hermiticity preserving: Choi matrix asymmetry {0:.3e}")]
    NotHermiticityPreserving(f64),
    #[error("not completely positive: Choi eigenvalue {0:.3e}")]
    NotCompletelyPositive(f64),
    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),
    #[error("not Hermitian: {0}")]
    NotHermitian(String),
    #[error("not a projector channel: {0}")]
    NotProjectorChannel(String),
    #[error("not a quantum channel: {0}")]
    NotChannel(String),
    #[error("not a Lindblad generator: {0}")]
    NotGenerator(String),
    #[error("not infinitely divisible: {0}")]
    NotDivisible(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
