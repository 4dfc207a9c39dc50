use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} out of range ({bound})")]
    Range {
        what: &'static str,
        value: String,
        bound: String,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("singular covariance: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    Singular { eigenvalue: f64, floor: f64 },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("ill-conditioned regressors: {0}")]
    Conditioning(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("not a correct specification: {0}")]
    NotCorrectSpecification(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: impl ToString, bound: impl ToString) -> Self {
        Error::Range {
            what,
            value: value.to_string(),
            bound: bound.to_string(),
        }
    }

    /// Class of the innermost error.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Stage { source, .. } => source.kind(),
            Error::Io { .. }
            | Error::Parse(_)
            | Error::InvalidInput(_)
            | Error::Range { .. }
            | Error::Contract(_)
            | Error::NotCorrectSpecification(_)
            | Error::Design(_)
            | Error::Json(_) => ErrorKind::Input,
            Error::Singular { .. }
            | Error::DegenerateVariance(_)
            | Error::Conditioning(_)
            | Error::UndefinedCorrelation(_) => ErrorKind::Numerical,
        }
    }

    /// Innermost error with stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage: stage.into(),
            source: Box::new(e),
        })
    }
}
