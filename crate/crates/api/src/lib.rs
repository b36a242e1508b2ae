//! HTTP+JSON service over a project store.
//!
//! Every request carries `Authorization: Bearer <token>`; the token table
//! maps tokens to user ids, and the user's role inside a project comes from
//! that project's parameterization. Mutations go through the store's
//! single-writer path and answer with the appended sequence number and the
//! recomputed project status.

mod auth;
mod error;
mod routes;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::middleware;
use axum::Router;
use veritrack_core::store::Store;

pub use auth::{Caller, TokenGrant, TokenTable};
pub use error::{status_for, ApiError};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub tokens: Arc<TokenTable>,
}

impl AppState {
    pub fn new(store: Store, tokens: TokenTable) -> Self {
        Self {
            store: Arc::new(store),
            tokens: Arc::new(tokens),
        }
    }
}

pub fn router(state: AppState) -> Router {
    routes::routes()
        .layer(middleware::from_fn_with_state(state.clone(), auth::require_token))
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    pub store: PathBuf,
    pub norms: Option<PathBuf>,
    pub tokens: TokenTable,
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot open store {path}: {source}")]
    Store {
        path: String,
        #[source]
        source: veritrack_core::store::StoreError,
    },
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(#[source] std::io::Error),
}

/// Opens the store, binds the listener and serves until the process is
/// stopped.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let store = Store::open_with(
        &config.store,
        config.norms.as_deref(),
        Arc::new(veritrack_core::store::SystemClock),
    )
    .map_err(|source| ServeError::Store {
        path: config.store.display().to_string(),
        source,
    })?;
    // Open every project up front so a corrupt log fails startup.
    for id in store.project_ids().map_err(|source| ServeError::Store {
        path: config.store.display().to_string(),
        source,
    })? {
        store
            .read(&id, |_| ())
            .map_err(|source| ServeError::Store {
                path: config.store.display().to_string(),
                source,
            })?;
    }
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen,
            source,
        })?;
    tracing::info!(addr = %config.listen, "listening");
    axum::serve(listener, router(AppState::new(store, config.tokens)))
        .await
        .map_err(ServeError::Serve)
}
