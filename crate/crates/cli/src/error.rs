use std::path::PathBuf;

use serde_json::json;

/// Benchmark failures, grouped by what the caller should do about them.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),

    #[error("missing or unreadable data under {root}: {source}")]
    MissingData {
        root: PathBuf,
        #[source]
        source: ffgood::Error,
    },

    #[error(transparent)]
    UnknownGoodness(ffgood::Error),

    #[error("training produced non-finite values for {}", goodness.join(", "))]
    NonFinite {
        goodness: Vec<String>,
        diagnostics: Vec<String>,
    },

    #[error("missing series for {}", missing.join(", "))]
    MissingSeries { dir: PathBuf, missing: Vec<String> },

    #[error("{path}: {reason}")]
    Output { path: PathBuf, reason: String },

    #[error(transparent)]
    Engine(#[from] ffgood::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;

impl BenchError {
    pub fn output(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        BenchError::Output {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Config(_) => "config",
            BenchError::MissingData { .. } => "missing_data",
            BenchError::UnknownGoodness(_) => "unknown_goodness",
            BenchError::NonFinite { .. } => "non_finite_training",
            BenchError::MissingSeries { .. } => "missing_series",
            BenchError::Output { .. } => "output",
            BenchError::Engine(_) => "engine",
        }
    }

    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::NonFinite { .. } => 3,
            _ => 1,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            BenchError::NonFinite { goodness, diagnostics } => {
                v["goodness"] = json!(goodness);
                v["diagnostics"] = json!(diagnostics);
            }
            BenchError::MissingSeries { dir, missing } => {
                v["dir"] = json!(dir);
                v["missing"] = json!(missing);
            }
            BenchError::MissingData { root, .. } => v["data_root"] = json!(root),
            _ => {}
        }
        v
    }
}
