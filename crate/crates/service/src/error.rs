use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cnnslicer_core::Error;
use serde::{Deserialize, Serialize};

/// JSON error body. `code` is the library error name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>, status: StatusCode) -> Self {
        ApiError {
            code: code.to_string(),
            message: message.into(),
            http_status: status.as_u16(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new("Internal", message, StatusCode::INTERNAL_SERVER_ERROR)
    }
}

/// HTTP status for a library error.
pub fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::InvalidSlice(_) | Error::InvalidArgument(_) => StatusCode::BAD_REQUEST,
        Error::UnknownRun(_)
        | Error::UnknownLayer(_)
        | Error::UnknownEpoch(_)
        | Error::UnknownChannel { .. }
        | Error::UnknownSample(_)
        | Error::LayerNotDumped(_)
        | Error::MissingOutputs(_) => StatusCode::NOT_FOUND,
        Error::TooFewSamples { .. }
        | Error::EmptySelection
        | Error::EmptyInput
        | Error::EmptyHistogram
        | Error::DomainError(_)
        | Error::SampleMisalignment(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(e.code(), e.to_string(), status_of(&e))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
