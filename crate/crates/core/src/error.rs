use thiserror::Error;

/// Errors raised by fitting, evaluation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("both classes must be present ({0})")]
    SingleClass(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid label {0}; expected -1 or +1")]
    InvalidLabel(f64),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal calibration failed: {0}")]
    Calibration(String),

    #[error("data format: {0}")]
    Format(String),

    #[error("axis mismatch: {0}")]
    AxisMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::SingleClass(_) => "single_class",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidLabel(_) => "invalid_label",
            Error::RankOutOfRange { .. } => "rank_out_of_range",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Calibration(_) => "calibration",
            Error::Format(_) => "format",
            Error::AxisMismatch(_) => "axis_mismatch",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
