use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage at which a per-shape error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Laplacian,
    Eigen,
    Signature,
    Statistics,
    Cache,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Laplacian => "laplacian",
            Stage::Eigen => "eigen",
            Stage::Signature => "signature",
            Stage::Statistics => "statistics",
            Stage::Cache => "cache",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("mass matrix entry {index} is not positive ({value})")]
    DegenerateMass { index: usize, value: f64 },

    #[error("within-group scatter matrix is singular: {0}")]
    SingularScatter(String),

    #[error("group layout error: {0}")]
    GroupCount(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("cache error at {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("{shape} [{stage}]: {source}")]
    Stage {
        shape: String,
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn at(self, shape: impl Into<String>, stage: Stage) -> Self {
        Error::Stage {
            shape: shape.into(),
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_)
            | Error::Convergence { .. }
            | Error::DegenerateMass { .. }
            | Error::SingularScatter(_) => true,
            Error::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::InvalidParam(_) => "invalid_param",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Numerical(_) => "numerical",
            Error::Convergence { .. } => "convergence",
            Error::DegenerateMass { .. } => "degenerate_mass",
            Error::SingularScatter(_) => "singular_scatter",
            Error::GroupCount(_) => "group_count",
            Error::Manifest(_) => "manifest",
            Error::Cache { .. } => "cache",
            Error::Stage { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
