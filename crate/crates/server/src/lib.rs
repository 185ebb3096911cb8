//! HTTP/JSON service over an immutable dataset snapshot.
//!
//! | route | response |
//! |---|---|
//! | `GET /healthz` | `ok` |
//! | `GET /api/summary` | dataset counts |
//! | `GET /api/search?...` | search response (JSON, inline SVG glyphs) |
//! | `GET /api/search/overlay?...&selected=I&target=J` | overlay glyph (SVG) |
//! | `GET /api/explain?...` | weights and corrected counts (CSV) |
//! | `GET /api/autocomplete?kind=&q=&lang=&limit=` | suggestions |
//! | `GET /api/taxonomy?kind=&lang=` | hierarchy nodes |
//! | `GET /api/trials/{id}?lang=` | trial detail |
//!
//! Anything else is served from the asset directory when one is configured.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::routing::get;
use axum::Router;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use ade_core::glyph::Styles;
use ade_core::Dataset;

mod error;
mod handlers;

pub use error::ApiError;

pub struct AppState {
    dataset: RwLock<Arc<Dataset>>,
    styles: Styles,
}

impl AppState {
    pub fn new(dataset: Dataset, styles: Styles) -> Self {
        AppState { dataset: RwLock::new(Arc::new(dataset)), styles }
    }

    /// The current dataset; requests keep their snapshot for their duration.
    pub fn snapshot(&self) -> Arc<Dataset> {
        self.dataset.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Atomically replace the served dataset.
    pub fn replace(&self, dataset: Dataset) {
        *self.dataset.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(dataset);
    }
}

pub fn router(state: Arc<AppState>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(handlers::healthz))
        .route("/api/summary", get(handlers::summary))
        .route("/api/search", get(handlers::search))
        .route("/api/search/overlay", get(handlers::overlay))
        .route("/api/explain", get(handlers::explain))
        .route("/api/autocomplete", get(handlers::autocomplete))
        .route("/api/taxonomy", get(handlers::taxonomy))
        .route("/api/trials/{id}", get(handlers::trial))
        .with_state(state);
    let app = match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(TraceLayer::new_for_http())
}

/// Serve until the process receives Ctrl-C.
pub async fn serve(addr: SocketAddr, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
