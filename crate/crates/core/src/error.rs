use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid primitives: {0}")]
    InvalidPrimitives(String),

    #[error(
        "divergence condition fails: kappa'(L)/phi'(phi^-1(kappa(L))) = {ratio:e} at L = {probe} \
         does not exceed {factor} * w = {threshold:e}"
    )]
    DivergenceViolation {
        ratio: f64,
        probe: f64,
        factor: f64,
        threshold: f64,
    },

    #[error("could not bracket a root of {what}")]
    RootBracketFailure { what: &'static str },

    #[error("u = {u} lies outside the closure of the effective domain [{lo}, {hi}]")]
    DomainError { u: f64, lo: f64, hi: f64 },

    #[error("invalid frontier: {0}")]
    InvalidFrontier(String),

    #[error("conflict of interest violated: need 0 <= u1 < u0, got u1 = {u1}, u0 = {u0}")]
    ConflictOfInterest { u0: f64, u1: f64 },

    #[error("frontier distribution has no support points")]
    EmptySupport,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("u* = 0: the gap classification applies only to u* > 0")]
    UStarAtOrigin,

    #[error("gap classification failed: {0}")]
    ClassificationFailed(String),

    #[error("{what} is not finite at t = {t}")]
    NonFiniteValue { what: &'static str, t: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("supergradient profile invalid at t = {t}: {detail}")]
    InvalidProfile { t: f64, detail: String },

    #[error("difference quotients do not converge: {0}")]
    NonConvergent(String),

    #[error("smoothing parameters out of range: {0}")]
    ParamsOutOfRange(String),

    #[error("smoothing extension infeasible: {0}")]
    ExtensionInfeasible(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (configuration or file syntax).
    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Parse { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
