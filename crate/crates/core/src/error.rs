use thiserror::Error;

/// Errors raised by simulation, analysis and configuration code.
///
/// Numeric payloads are widened to `f64` so the error type does not depend on
/// the scalar type of the computation that failed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("state diverged at t = {t}: last finite state {last_state:?} at t = {last_t}")]
    Divergence {
        t: f64,
        last_t: f64,
        last_state: Vec<f64>,
    },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("state left the law's domain at t = {t}: {what}")]
    DomainExit { t: f64, what: String },

    #[error("evaluation produced a non-finite value: {0}")]
    Evaluation(String),

    #[error("adaptation law is invalid: {0}")]
    InvalidLaw(String),

    #[error("no fixed point: g(mu0) = {target} lies outside the range [{f_min}, {f_max}] of f")]
    NoFixedPoint { target: f64, f_min: f64, f_max: f64 },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("subcritical: {0}")]
    Subcritical(String),

    #[error("compatibility precondition failed: {0}")]
    Incompatible(String),

    #[error("insufficient sweep range: {0}")]
    InsufficientRange(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable name of the failure mode.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Divergence { .. } => "divergence",
            Error::Range(_) => "range",
            Error::DomainExit { .. } => "domain_exit",
            Error::Evaluation(_) => "evaluation",
            Error::InvalidLaw(_) => "invalid_law",
            Error::NoFixedPoint { .. } => "no_fixed_point",
            Error::Protocol(_) => "protocol",
            Error::Subcritical(_) => "subcritical",
            Error::Incompatible(_) => "incompatible",
            Error::InsufficientRange(_) => "insufficient_range",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 bad input, 3 the run blew up, 4 sweep
    /// precondition, 5 file system.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::DomainExit { .. } | Error::Evaluation(_) => 3,
            Error::Incompatible(_) => 4,
            Error::Io(_) => 5,
            _ => 2,
        }
    }
}
