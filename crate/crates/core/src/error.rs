use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry mismatch: expected {expected} sites, found {found}")]
    GeometryMismatch { expected: usize, found: usize },

    #[error("non-finite amplitude at index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense cap exceeded: {sites} sites > cap {cap}")]
    DenseCapExceeded { sites: usize, cap: usize },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("chebyshev tolerance {tolerance:e} unachievable below order cap {cap}")]
    ToleranceUnachievable { tolerance: f64, cap: usize },

    #[error("norm drift {drift:e} exceeds 1e-9 at t = {time} (spectral bounds violated?)")]
    NormDrift { drift: f64, time: f64 },

    #[error("interval ({lo}, {hi}) contains no eigenvalue")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("intervals overlap: ({0}, {1}) and ({2}, {3})")]
    OverlappingIntervals(f64, f64, f64, f64),

    #[error("horizon rule violated: t = {t} exceeds light-cone horizon t_max = {t_max}")]
    HorizonViolation { t: f64, t_max: f64 },

    #[error("series does not contain moment order r = {0}")]
    MissingOrder(f64),

    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),

    #[error("zero norm encountered at t = {0}")]
    ZeroNorm(f64),

    #[error("quadrature did not converge after {halvings} step halvings (last change {change:e})")]
    QuadratureNotConverged { halvings: usize, change: f64 },

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
