use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input failed a precondition or constraint check.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("time {t} μs is outside the pulse window [0, {tf}] μs")]
    Domain { t: f64, tf: f64 },

    #[error("norm drift {drift:.3e} exceeds 1e-6 with step {step} μs; use a smaller step")]
    Integration { drift: f64, step: f64 },

    #[error("sweep point at {value} failed: {source}")]
    SweepPoint { value: f64, source: Box<Error> },

    #[error("worker pool: {0}")]
    Pool(String),

    #[error("coordinate scan has no feasible points")]
    EmptyScan,
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors raised by numerical integration rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Integration { .. } => true,
            Error::SweepPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
