//! HTTP service over the matching engine: profile and project storage,
//! cached recommendations, team suggestions, batch allocation runs and
//! coordinator overrides.

pub mod api;
pub mod auth;
pub mod cache;
pub mod config;
pub mod error;
pub mod state;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::{router, EXPORT_COLUMNS};
pub use cache::{Clock, ManualClock, RecommendationCache, SystemClock};
pub use config::{AuthConfig, ServiceConfig};
pub use error::ApiError;
pub use state::{AllocationRecord, AppState, CohortView, EngineSettings, JobStatus, OverrideRecord};
pub use store::{RecordKind, Store, StoreError, StoreRecord};

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
