use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use facebreed_core::Error;
use serde::Serialize;

/// JSON error body: `{"error": code, "message": ..., "field": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub field: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::SessionFinished => (StatusCode::CONFLICT, "session_finished"),
            Error::BackendUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable"),
            Error::NoUnlockedFeatures => (StatusCode::UNPROCESSABLE_ENTITY, "no_unlocked_features"),
            Error::LockedFeature(_) => (StatusCode::UNPROCESSABLE_ENTITY, "locked_feature"),
            Error::FeatureUnavailable { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "feature_unavailable"),
            Error::UnknownAxis(_) => (StatusCode::UNPROCESSABLE_ENTITY, "unknown_feature"),
            Error::InvalidSlot(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_slot"),
            Error::Configuration(_) => (StatusCode::BAD_REQUEST, "configuration"),
            Error::Io { .. } | Error::Image(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.code,
            message: &self.message,
            field: self.field.as_deref(),
        };
        (self.status, Json(body)).into_response()
    }
}
