use thiserror::Error;

/// Errors raised by the cubature routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid lattice configuration: {0}")]
    InvalidLattice(String),

    #[error("invalid generating vector: {0}")]
    GeneratingVector(String),

    #[error("lattice index {index} outside supported range 1..={max}")]
    IndexOutOfRange { index: u64, max: u64 },

    #[error("{0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("unsupported Bernoulli polynomial degree {0} (supported: 2, 4)")]
    UnsupportedDegree(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigenvalue {index} of the Gram matrix is not positive ({value:e})")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("eigenvalues carry an imaginary residue of relative size {ratio:e}")]
    ImaginaryResidue { ratio: f64 },

    #[error("integrand data are degenerate: no variation beyond the mean")]
    DegenerateData,

    #[error(
        "Cholesky factorization failed (n = {n}, kernel parameter = {param}); \
         the Gram matrix is numerically singular, try a smaller maximum sample size"
    )]
    CholeskyFailure { n: usize, param: f64 },

    #[error("integrand returned non-finite value {value} at node {index}")]
    IntegrandFailure { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
