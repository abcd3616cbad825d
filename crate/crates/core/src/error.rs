use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {index} out of range for dimension {dim}")]
    ModeIndex { index: usize, dim: usize },

    #[error("splitter needs two distinct modes, got {0} twice")]
    SameMode(usize),

    #[error("{name} = {value} is outside {expected}")]
    Domain {
        name: String,
        value: f64,
        expected: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not unitary (max |U^dagger U - I| = {defect:.3e})")]
    NonUnitary { defect: f64 },

    #[error("step {step}: interference range {range:.3e} is degenerate, monitored signal does not depend on the knob")]
    Degenerate { step: u8, range: f64 },

    #[error("step {step}: {reason}")]
    Calibration { step: u8, reason: String },

    #[error("invalid trace: {0}")]
    Trace(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(name: impl Into<String>, value: f64, expected: impl Into<String>) -> Self {
        Error::Domain {
            name: name.into(),
            value,
            expected: expected.into(),
        }
    }
}
