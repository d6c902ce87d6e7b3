use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("matrix is singular or nearly singular (pivot {pivot:e})")]
    Singular { pivot: f64 },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NoConvergence { estimate: f64, iterations: usize },

    #[error("invalid size: {0}")]
    Size(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("non-finite value encountered in {0}")]
    Numeric(String),

    #[error("contract violated: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn shape(expected: impl core::fmt::Display, got: impl core::fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
