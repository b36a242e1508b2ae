use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Request, State};
use axum::http::header::AUTHORIZATION;
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use veritrack_core::access::{authorize, Action, Role};

use crate::error::ApiError;
use crate::AppState;

/// What a bearer token stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenGrant {
    pub user_id: String,
    /// Projects the token may touch; absent means every project the user
    /// belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projects: Option<Vec<String>>,
    /// Role for operations outside any project (norm upload).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform_role: Option<Role>,
}

/// Server-side token table, loaded from a JSON object `{token: grant}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenTable(pub BTreeMap<String, TokenGrant>);

impl TokenTable {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read token table {}: {e}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| format!("malformed token table {}: {e}", path.display()))
    }

    pub fn insert(&mut self, token: &str, grant: TokenGrant) {
        self.0.insert(token.to_string(), grant);
    }

    pub fn get(&self, token: &str) -> Option<&TokenGrant> {
        self.0.get(token)
    }
}

/// The authenticated caller, attached to every request that passes
/// [`require_token`].
#[derive(Debug, Clone)]
pub struct Caller(pub Arc<TokenGrant>);

impl Caller {
    pub fn user_id(&self) -> &str {
        &self.0.user_id
    }

    pub fn may_access(&self, project_id: &str) -> bool {
        self.0
            .projects
            .as_ref()
            .is_none_or(|ps| ps.iter().any(|p| p == project_id))
    }

    pub fn check_project(&self, project_id: &str) -> Result<(), ApiError> {
        if self.may_access(project_id) {
            Ok(())
        } else {
            Err(ApiError::new(
                axum::http::StatusCode::FORBIDDEN,
                "PermissionDenied",
                format!("token is not valid for project {project_id:?}"),
            )
            .with("actor", self.user_id())
            .with("project_id", project_id))
        }
    }

    pub fn check_platform(&self, action: Action) -> Result<(), ApiError> {
        match self.0.platform_role {
            Some(role) if authorize(role, action).is_allowed() => Ok(()),
            _ => Err(ApiError::new(
                axum::http::StatusCode::FORBIDDEN,
                "PermissionDenied",
                format!("{} may not {action}", self.user_id()),
            )
            .with("actor", self.user_id())
            .with("action", action.to_string())),
        }
    }
}

pub async fn require_token(
    State(state): State<AppState>,
    mut request: Request,
    next: Next,
) -> Response {
    let token = request
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    let Some(token) = token else {
        return ApiError::unauthenticated("missing bearer token").into_response();
    };
    let Some(grant) = state.tokens.get(token) else {
        return ApiError::unauthenticated("unknown token").into_response();
    };
    request
        .extensions_mut()
        .insert(Caller(Arc::new(grant.clone())));
    next.run(request).await
}
