use serde::Serialize;
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;
/// I/O and anything else unexpected.
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{model} did not converge: max R-hat {max_rhat:.3}")]
    Convergence { model: String, max_rhat: f64 },
    #[error(transparent)]
    Core(#[from] srb_core::Error),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    kind: &'a str,
    exit_code: i32,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(srb_core::Error::Config(_)) => EXIT_CONFIG,
            CliError::Convergence { .. } => EXIT_CONVERGENCE,
            CliError::Core(e) if e.is_data_error() => EXIT_DATA,
            CliError::Core(srb_core::Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => EXIT_DATA,
            CliError::Core(_) => EXIT_OTHER,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_CONFIG => "config",
            EXIT_DATA => "data",
            EXIT_CONVERGENCE => "convergence",
            _ => "runtime",
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json(&self) -> String {
        let msg = self.to_string();
        serde_json::to_string(&ErrorReport {
            error: &msg,
            kind: self.kind(),
            exit_code: self.exit_code(),
        })
        .expect("plain struct serializes")
    }
}
