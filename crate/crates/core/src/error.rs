use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported rate conversion {from} Hz -> {to} Hz: decimation factor must be an integer")]
    UnsupportedRate { from: f64, to: f64 },

    #[error("no complete epoch fits in the recording")]
    EmptyEpochs,

    #[error("subject {subject} has no {segment} rows")]
    MissingBaseline { subject: u32, segment: &'static str },

    #[error("subject {subject} has {rows} rows in {segment}; at least 2 are needed for statistics")]
    DegenerateStats {
        subject: u32,
        segment: &'static str,
        rows: usize,
    },

    #[error("no normalization statistics for subject {0}")]
    MissingStats(u32),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate model input: {0}")]
    DegenerateModel(String),

    #[error("subject {subject}: needs at least {needed} rows, has {found}")]
    InsufficientRows {
        subject: u32,
        needed: usize,
        found: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-parsable category, used by the CLI for its one-line errors.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::UnsupportedRate { .. } => "config",
            Error::EmptyEpochs | Error::Empty(_) => "empty",
            Error::MissingBaseline { .. } | Error::MissingStats(_) => "missing-data",
            Error::DegenerateStats { .. } | Error::DegenerateModel(_) => "degenerate",
            Error::DimensionMismatch { .. } => "dimension",
            Error::InsufficientRows { .. } => "insufficient-rows",
            Error::Parse(_) | Error::Csv(_) | Error::Json(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
