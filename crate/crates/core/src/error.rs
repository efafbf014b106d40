use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: column `{column}`: {message}")]
    Malformed {
        file: String,
        line: u64,
        column: String,
        message: String,
    },

    #[error("{file}:{line}: unknown state code `{state}`")]
    UnknownState { file: String, line: u64, state: String },

    #[error("{file}: duplicate key ({state}, {year}) on lines {first_line} and {second_line}")]
    DuplicateKey {
        file: String,
        state: String,
        year: i32,
        first_line: u64,
        second_line: u64,
    },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("unusable state-survey cell ({survey_id}, {state}): {reason}")]
    UnusableCell {
        survey_id: String,
        state: String,
        reason: String,
    },

    #[error("record {record}: neither ideal boy/girl counts nor ideal total present")]
    MissingPreference { record: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing covariate for state {state} in year {year}")]
    MissingCovariate { state: String, year: i32 },

    #[error("log-posterior not finite at initialization of chain {chain}: {detail}")]
    NonFiniteInit { chain: usize, detail: String },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by inputs (as opposed to configuration or I/O).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Malformed { .. }
                | Error::UnknownState { .. }
                | Error::DuplicateKey { .. }
                | Error::InvalidData(_)
                | Error::UnusableCell { .. }
                | Error::MissingPreference { .. }
                | Error::MissingCovariate { .. }
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
