use axum::http::{HeaderMap, StatusCode};

use crate::config::AuthConfig;
use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Student,
    Supervisor,
    Coordinator,
}

pub const ANY: &[Role] = &[Role::Student, Role::Supervisor, Role::Coordinator];
pub const STUDENT_WRITE: &[Role] = &[Role::Student, Role::Coordinator];
pub const PROJECT_WRITE: &[Role] = &[Role::Supervisor, Role::Coordinator];
pub const STAFF: &[Role] = &[Role::Supervisor, Role::Coordinator];
pub const COORDINATOR: &[Role] = &[Role::Coordinator];

/// Resolves the bearer token to a role and checks it against `allowed`.
/// Returns `None` when auth is disabled.
pub fn authorize(cfg: &AuthConfig, headers: &HeaderMap, allowed: &[Role]) -> Result<Option<Role>, ApiError> {
    if !cfg.enabled() {
        return Ok(None);
    }
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
        .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing bearer token"))?;
    let role = [
        (&cfg.coordinator_token, Role::Coordinator),
        (&cfg.supervisor_token, Role::Supervisor),
        (&cfg.student_token, Role::Student),
    ]
    .into_iter()
    .find(|(t, _)| t.as_deref() == Some(token))
    .map(|(_, r)| r)
    .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "unknown token"))?;
    if allowed.contains(&role) {
        Ok(Some(role))
    } else {
        Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "forbidden",
            format!("role {role:?} may not perform this action"),
        ))
    }
}
