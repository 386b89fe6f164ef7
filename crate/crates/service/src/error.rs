use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use reshape_core::model::ValidationReport;
use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidDrawing,
    NotFound,
    BadParams,
    Internal,
}

/// JSON error body: `{"code", "message", "details"?}`.
#[derive(Debug, Serialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn bad_params(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, ErrorCode::BadParams, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, ErrorCode::NotFound, message)
    }

    /// The corpus lacks the drawings an aggregate needs.
    pub fn empty_corpus(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, ErrorCode::BadParams, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, ErrorCode::Internal, message)
    }

    pub fn invalid_drawing(report: &ValidationReport) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: ErrorCode::InvalidDrawing,
            message: report.to_string(),
            details: serde_json::to_value(&report.problems).ok(),
        }
    }
}

impl From<reshape_core::Error> for ApiError {
    fn from(e: reshape_core::Error) -> Self {
        use reshape_core::Error as E;
        match e {
            E::Validation(report) => ApiError::invalid_drawing(&report),
            E::InvalidParams(m) | E::Degenerate(m) | E::MixedKinds(m) => ApiError::bad_params(m),
            E::EmptyInput(m) => ApiError::empty_corpus(m),
            E::UnknownId(m) => ApiError::not_found(m),
            E::Io(_) | E::Json(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&self).unwrap_or_default();
        (
            self.status,
            [(axum::http::header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response()
    }
}
