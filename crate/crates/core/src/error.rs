use thiserror::Error;

/// Errors raised by the library. Each variant names the violated
/// precondition so callers (the CLI in particular) can map it to an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty block structure: at least one block size is required")]
    EmptyStructure,

    #[error("block sizes must be positive and non-increasing, got {0:?}")]
    BadBlockSizes(Vec<usize>),

    #[error("block {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        got: (usize, usize),
        expected: (usize, usize),
    },

    #[error("block {index} is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { index: usize, sigma_min: f64 },

    #[error("dilation factor must be positive, got {0}")]
    NonPositiveDilation(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} did not converge: {detail}")]
    NoConvergence { what: &'static str, detail: String },

    #[error("diffusion matrix is not of the admissible block form: {0}")]
    InadmissibleDiffusion(String),

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("covariance matrix is numerically singular (condition {cond:e} > {threshold:e})")]
    IllConditioned { cond: f64, threshold: f64 },

    #[error("ellipticity bounds invalid: lambda = {lambda}, Lambda = {big_lambda}")]
    BadEllipticity { lambda: f64, big_lambda: f64 },

    #[error("hypothesis H1 violated: Lambda/lambda = {ratio} is not below 1 + 2/Q = {threshold}")]
    H1Violated { ratio: f64, threshold: f64 },

    #[error("kernel exponent s = {s} must be below 1 + 2/Q = {threshold} for potentials")]
    ExponentTooLarge { s: f64, threshold: f64 },

    #[error("kernel exponent s = {0} < 1 gives no uniform strip bound")]
    ExponentBelowOne(f64),

    #[error("kernel is identically zero here (t - tau = {0} <= 0)")]
    OutsideSupport(f64),

    #[error("point is not in the required set: {0}")]
    Membership(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("modulus of continuity too large: omega(eps0) = {omega} > {bound}")]
    ModulusTooLarge { omega: f64, bound: f64 },

    #[error("inconsistent constant: {0}")]
    InconsistentConstant(String),

    #[error("discretization infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite data encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
