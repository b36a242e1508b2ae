use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Map, Value};
use veritrack_core::audit::AuditError;
use veritrack_core::project::ProjectError;
use veritrack_core::store::StoreError;

/// An error response: `{error_code, message, context}`.
#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub context: Map<String, Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            context: Map::new(),
        }
    }

    pub fn unauthenticated(message: &str) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthenticated", message)
    }

    pub fn invalid_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", message)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }
}

/// HTTP status for a stable error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "Unauthenticated" => StatusCode::UNAUTHORIZED,
        "PermissionDenied" => StatusCode::FORBIDDEN,
        "InvalidRequest" => StatusCode::BAD_REQUEST,
        "IllegalTransition" | "DuplicateItemId" | "DuplicateProject" | "DuplicateNorm"
        | "LastManagerRemoval" => StatusCode::CONFLICT,
        "StorageFailure" | "ChainCorruption" | "InvalidEventSequence" | "EvidenceMismatch" => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        c if c.starts_with("Unknown") => StatusCode::NOT_FOUND,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = e.code();
        let mut err = ApiError::new(status_for(code), code, e.to_string());
        match &e {
            StoreError::Project(ProjectError::PermissionDenied { actor, action }) => {
                err = err.with("actor", actor.as_str()).with("action", action.to_string());
            }
            StoreError::Project(ProjectError::IllegalTransition { from, to }) => {
                err = err.with("from", from.to_string()).with("to", to.to_string());
            }
            StoreError::Project(ProjectError::UnknownQuestion { checklist, question }) => {
                err = err
                    .with("checklist", checklist.as_str())
                    .with("question", question.as_str());
            }
            StoreError::Audit(AuditError::ChainCorruption { index, .. }) => {
                err = err.with("record", *index as u64);
            }
            StoreError::Audit(AuditError::InvalidEventSequence { sequence, .. }) => {
                err = err.with("sequence", *sequence);
            }
            _ => {}
        }
        if err.status.is_server_error() {
            tracing::error!(code, error = %e, "request failed");
        }
        err
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        StoreError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error_code": self.code,
            "message": self.message,
            "context": self.context,
        });
        (self.status, Json(body)).into_response()
    }
}
