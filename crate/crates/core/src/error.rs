//! Crate-wide error type.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, PclError>;

#[derive(Debug, Error)]
pub enum PclError {
    /// Operand shapes are incompatible for an operation.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A hyperparameter or argument is outside its valid range.
    #[error("invalid parameter {name}: {detail}")]
    Parameter { name: &'static str, detail: String },

    /// An API precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A dataset bundle file is missing, malformed, or inconsistent.
    #[error("load error in {file}{}: {detail}", fmt_line(.line))]
    Load {
        file: String,
        line: Option<usize>,
        detail: String,
    },

    /// A dataset split could not be constructed.
    #[error("split error: {0}")]
    Split(String),

    /// Label-noise injection could not find enough cross-class pairs.
    #[error("label noise error: {0}")]
    Noise(String),

    /// The RWR power iteration did not converge.
    #[error("rwr solver did not converge: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(l) => format!(":{l}"),
        None => String::new(),
    }
}

impl PclError {
    pub fn dimension(op: &'static str, detail: impl Into<String>) -> Self {
        PclError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn parameter(name: &'static str, detail: impl Into<String>) -> Self {
        PclError::Parameter {
            name,
            detail: detail.into(),
        }
    }

    pub fn load(file: impl Into<String>, line: Option<usize>, detail: impl Into<String>) -> Self {
        PclError::Load {
            file: file.into(),
            line,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        PclError::Io {
            path: path.into(),
            source,
        }
    }
}
