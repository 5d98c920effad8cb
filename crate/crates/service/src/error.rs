use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use qmatch_core::Error;
use serde_json::json;

/// An error as returned to HTTP clients: `{"error": <kind>, "message": ...}`.
#[derive(Debug)]
pub enum ApiError {
    Core(Error),
    NotFound { kind: &'static str, message: String },
    Conflict { kind: &'static str, message: String },
    BadRequest(String),
    Internal(String),
}

impl ApiError {
    pub fn not_found(kind: &'static str, message: impl Into<String>) -> Self {
        ApiError::NotFound {
            kind,
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Core(e) => match e {
                Error::UnknownTopic(_) | Error::UnknownId(_) => StatusCode::NOT_FOUND,
                Error::TopicExists(_) | Error::VersionConflict { .. } | Error::Locked(_) => {
                    StatusCode::CONFLICT
                }
                Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_REQUEST,
            },
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::Conflict { .. } => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ApiError::Core(e) => e.kind(),
            ApiError::NotFound { kind, .. } | ApiError::Conflict { kind, .. } => kind,
            ApiError::BadRequest(_) => "bad_request",
            ApiError::Internal(_) => "internal",
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ApiError::Core(e) => e.fmt(f),
            ApiError::NotFound { message, .. }
            | ApiError::Conflict { message, .. }
            | ApiError::BadRequest(message)
            | ApiError::Internal(message) => f.write_str(message),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::Core(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": self.kind(), "message": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
