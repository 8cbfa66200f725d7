use thiserror::Error;

use crate::correlation::CorrelationError;
use crate::data::DataError;
use crate::evaluation::EvalError;
use crate::logit::ModelError;
use crate::radviz::RadvizError;

/// Errors of the pipeline stages that combine several modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Radviz(#[from] RadvizError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid chart: {0}")]
    Spec(String),
    #[error("chart `{title}`: {source}")]
    Chart { title: String, source: Box<Error> },
    #[error("panorama file schema error: {0}")]
    Schema(String),
    #[error("unsupported panorama format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },
    #[error("panorama checksum mismatch")]
    Checksum,
    #[error("table is missing column(s): {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("no dataset attached; similar cases are unavailable")]
    DatasetUnavailable,
    #[error("unknown chart `{0}`")]
    UnknownChart(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
