use std::fmt;

use chrono::NaiveDateTime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp {
        path: String,
        line: u64,
        timestamp: NaiveDateTime,
    },

    #[error("{path}:{line}: timestamp {timestamp} precedes the previous record")]
    NonMonotoneTimestamp {
        path: String,
        line: u64,
        timestamp: NaiveDateTime,
    },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("cannot resample: {0}")]
    Resample(String),

    #[error("rainfall and discharge series have no overlapping timestamps")]
    EmptyOverlap,

    #[error("{0}")]
    Gap(GapReport),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("column mismatch: model expects {expected:?}, got {found:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("peak model unavailable: {found} peak rows, at least {required} required")]
    PeakModelUnavailable { found: usize, required: usize },

    #[error("fusion alignment: {0}")]
    Alignment(String),

    #[error("model document: {0}")]
    ModelFormat(String),

    #[error("manifest is empty")]
    EmptyManifest,

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

/// Missing or absent steps found inside a modelling range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapReport {
    pub catchment_id: String,
    pub missing: Vec<NaiveDateTime>,
}

impl fmt::Display for GapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "catchment {}: {} missing step(s) inside the modelling range",
            self.catchment_id,
            self.missing.len()
        )?;
        let shown: Vec<String> = self.missing.iter().take(5).map(|t| t.to_string()).collect();
        if !shown.is_empty() {
            write!(f, " (first: {}", shown.join(", "))?;
            if self.missing.len() > shown.len() {
                write!(f, ", ...")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}
