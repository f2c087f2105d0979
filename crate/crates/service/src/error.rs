use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rogue_core::decoherence::DecoherenceError;
use rogue_core::engine::{EngineError, Refusal};
use rogue_core::memory::MemoryError;
use serde::{Deserialize, Serialize};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.to_owned(),
                message: message.into(),
                request_id: None,
            },
        }
    }

    pub fn unknown_actor(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownActor", format!("no actor {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<Refusal> for ApiError {
    fn from(r: Refusal) -> Self {
        let mut e = ApiError::new(StatusCode::LOCKED, "Suspended", r.to_string());
        e.body.request_id = Some(r.request_id);
        e
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), "MalformedJson", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "MalformedQuery", r.body_text())
    }
}

impl From<DecoherenceError> for ApiError {
    fn from(e: DecoherenceError) -> Self {
        let (status, code) = match &e {
            DecoherenceError::UnknownRequest(_) => (StatusCode::CONFLICT, "UnknownRequest"),
            DecoherenceError::NotSuspended => (StatusCode::CONFLICT, "NotSuspended"),
            DecoherenceError::AlreadySuspended => (StatusCode::CONFLICT, "AlreadySuspended"),
            DecoherenceError::InvalidOption { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidOption"),
            DecoherenceError::AnswerBeforeRequest { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "AnswerBeforeRequest"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "Decoherence"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Decoherence(d) => d.into(),
            EngineError::StaleStep { .. } | EngineError::EventOutOfStep { .. } => {
                ApiError::new(StatusCode::CONFLICT, "StaleStep", e.to_string())
            }
            EngineError::Signal(_) | EngineError::InvalidSnapshot(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidSignal", e.to_string())
            }
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "Engine", other.to_string()),
        }
    }
}

impl From<MemoryError> for ApiError {
    fn from(e: MemoryError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "EpisodeLog", e.to_string())
    }
}
