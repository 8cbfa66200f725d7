use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde_json::json;

use ucreg_core::Error;

/// Error body: `{"error": {"code": ..., "detail": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
        }
    }

    pub fn bad_request(code: &'static str, detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, detail)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {kind} `{id}`"))
    }
}

fn code_of(e: &Error) -> &'static str {
    match e {
        Error::Data(_) => "data_error",
        Error::Correlation(_) => "correlation_error",
        Error::Radviz(_) => "layout_error",
        Error::Model(_) => "model_error",
        Error::Eval(_) => "evaluation_error",
        Error::Spec(_) => "invalid_chart",
        Error::Chart { source, .. } => code_of(source),
        Error::Schema(_) => "schema_error",
        Error::UnsupportedVersion { .. } => "unsupported_version",
        Error::Checksum => "checksum_mismatch",
        Error::MissingColumns(_) => "missing_columns",
        Error::DatasetUnavailable => "dataset_unavailable",
        Error::UnknownChart(_) => "unknown_chart",
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownChart(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, code_of(&e), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "detail": self.detail } });
        (self.status, axum::Json(body)).into_response()
    }
}
