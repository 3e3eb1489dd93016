use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use teamup_core::{EmbedError, RankingError, SimError, TeamError, ValidationError};

use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<ValidationError>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: code.to_string(),
                message: message.into(),
                violations: Vec::new(),
            },
        }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} `{id}` not found"))
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn invalid(violations: Vec<ValidationError>) -> Self {
        let mut e = Self::unprocessable("validation_failed", format!("{} violation(s)", violations.len()));
        e.body.violations = violations;
        e
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EmptyProfile | EmbedError::EmptyProject | EmbedError::EmptyText => {
                ApiError::unprocessable("empty_input", e.to_string())
            }
            _ => ApiError::new(StatusCode::BAD_GATEWAY, "embedding_failed", e.to_string()),
        }
    }
}

impl From<RankingError> for ApiError {
    fn from(e: RankingError) -> Self {
        match e {
            RankingError::StudentUnknown(id) => ApiError::not_found("student", &id),
            RankingError::InvalidParams(_) | RankingError::Index(_) => {
                ApiError::unprocessable("invalid_parameters", e.to_string())
            }
            RankingError::EmptyCohort => ApiError::conflict("empty_cohort", e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<TeamError> for ApiError {
    fn from(e: TeamError) -> Self {
        match e {
            TeamError::PoolTooSmall(_) => ApiError::conflict("pool_too_small", e.to_string()),
            TeamError::InvalidTargetSize { .. } | TeamError::InvalidParams(_) => {
                ApiError::unprocessable("invalid_parameters", e.to_string())
            }
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<SimError> for ApiError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InsufficientCapacity { .. } => ApiError::conflict("insufficient_capacity", e.to_string()),
            SimError::UnknownId(id) => ApiError::not_found("record", &id),
            _ => ApiError::internal(e.to_string()),
        }
    }
}
