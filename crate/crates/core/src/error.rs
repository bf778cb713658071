use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain: the mask selects no interior node")]
    EmptyDomain,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("mask shape mismatch: expected {expected} entries, got {got}")]
    MaskShape { expected: usize, got: usize },

    #[error("grid mismatch between grid functions")]
    GridMismatch,

    #[error("value at node {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("node {0} lies outside the domain mask and cannot be assigned")]
    OutsideMask(usize),

    #[error("exponent p = {p} outside the supported range [2, {max}]")]
    ExponentRange { p: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Rayleigh quotient of the zero function is undefined")]
    ZeroFunction,

    #[error("inner solver did not converge after {iters} iterations (residual {residual:e})")]
    InnerNotConverged { iters: usize, residual: f64 },

    #[error("non-finite value encountered in {0}")]
    NaN(&'static str),

    #[error("trajectory did not converge; ground state is not available")]
    NotConverged,

    #[error("decay rate undefined: rescaled mass fell below the zero threshold")]
    DegenerateMass,

    #[error("trajectory too short: need {needed} records, have {have}")]
    TrajectoryTooShort { needed: usize, have: usize },

    #[error("operation requires an unmasked interval or rectangle")]
    MaskedGrid,

    #[error("Rayleigh minimization did not converge after {iters} iterations (residual {residual:e})")]
    MinimizerNotConverged { iters: usize, residual: f64 },

    #[error("snapshot parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
