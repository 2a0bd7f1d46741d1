use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use tinder_core::TinderError;

/// An HTTP error with a JSON body `{"error": ..., "row"?, "column"?}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub location: Option<(usize, usize)>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), location: None }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    pub fn conflict(what: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, what)
    }

    pub fn internal(what: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, what)
    }
}

impl From<TinderError> for ApiError {
    fn from(err: TinderError) -> Self {
        let status = match &err {
            TinderError::Parse { .. } | TinderError::Format(_) | TinderError::InvalidData(_) => StatusCode::BAD_REQUEST,
            TinderError::Contract(_) | TinderError::InvalidParams(_) | TinderError::InvalidConfig(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            TinderError::IllegalState(_) => StatusCode::CONFLICT,
            TinderError::Io(_) | TinderError::Serde(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let location = match &err {
            TinderError::Parse { row, column, .. } => Some((*row, *column)),
            _ => None,
        };
        Self { status, message: err.to_string(), location }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: &self.message,
            row: self.location.map(|l| l.0),
            column: self.location.map(|l| l.1),
        };
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

/// Failure to start or run the service.
#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] TinderError),
}
