//! HTTP front end over the graph store, query engine and embedding tiers.

mod error;
mod limit;
mod routes;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{ConnectInfo, Request, State};
use axum::http::{HeaderValue, Method};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};
use vulgd_core::embedder::TierStore;
use vulgd_core::graph::GraphStore;
use vulgd_core::pipeline::ApiSettings;

pub use error::{ApiError, ErrorBody};
pub use limit::{Clock, ManualClock, RateLimiter, SystemClock};
pub use routes::{CypherRequest, CypherResponse};

pub const BASE_PATH: &str = "/api/v1";
/// Request header the bundled UI sets to `browser`.
pub const ORIGIN_HEADER: &str = "x-client-origin";
/// Optional client identity for rate limiting; the peer address otherwise.
pub const API_KEY_HEADER: &str = "x-api-key";

struct Shared {
    store: GraphStore,
    tiers: Arc<TierStore>,
    settings: ApiSettings,
    limiter: RateLimiter,
    query_slots: Arc<Semaphore>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(store: GraphStore, tiers: Arc<TierStore>, settings: ApiSettings) -> Self {
        Self::with_clock(store, tiers, settings, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(store: GraphStore, tiers: Arc<TierStore>, settings: ApiSettings, clock: Arc<dyn Clock>) -> Self {
        let slots = std::thread::available_parallelism().map_or(4, |n| n.get());
        AppState(Arc::new(Shared {
            limiter: RateLimiter::new(settings.rate_limit_per_minute, clock),
            query_slots: Arc::new(Semaphore::new(slots)),
            store,
            tiers,
            settings,
        }))
    }

    pub fn store(&self) -> &GraphStore {
        &self.0.store
    }

    pub fn tiers(&self) -> Arc<TierStore> {
        self.0.tiers.clone()
    }

    pub fn settings(&self) -> &ApiSettings {
        &self.0.settings
    }

    pub(crate) fn query_slots(&self) -> Arc<Semaphore> {
        self.0.query_slots.clone()
    }
}

fn client_key(req: &Request) -> String {
    if let Some(key) = req.headers().get(API_KEY_HEADER).and_then(|v| v.to_str().ok()) {
        return format!("key:{key}");
    }
    match req.extensions().get::<ConnectInfo<SocketAddr>>() {
        Some(ConnectInfo(addr)) => format!("ip:{}", addr.ip()),
        None => "anonymous".to_string(),
    }
}

async fn rate_limit(State(state): State<AppState>, req: Request, next: Next) -> Response {
    match state.0.limiter.check(&client_key(&req)) {
        Ok(()) => next.run(req).await,
        Err(wait) => {
            let secs = wait.as_secs_f64().ceil().max(1.0) as u64;
            let mut err = ApiError::new(
                axum::http::StatusCode::TOO_MANY_REQUESTS,
                "rate limited",
                format!("retry after {secs} s"),
            );
            err.retry_after = Some(secs);
            err.into_response()
        }
    }
}

fn cors(allow: &[String]) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    if allow.iter().any(|o| o == "*") {
        layer.allow_origin(Any)
    } else {
        let origins: Vec<HeaderValue> = allow.iter().filter_map(|o| o.parse().ok()).collect();
        layer.allow_origin(AllowOrigin::list(origins))
    }
}

/// All routes, each reachable with and without a trailing slash.
pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/docs", get(routes::docs))
        .route("/docs/", get(routes::docs))
        .route("/node_download", get(routes::node_download))
        .route("/node_download/", get(routes::node_download))
        .route("/relationship_download", get(routes::relationship_download))
        .route("/relationship_download/", get(routes::relationship_download))
        .route("/cypher_query", post(routes::cypher_query))
        .route("/cypher_query/", post(routes::cypher_query))
        .route("/llm_embedding", get(routes::llm_embedding))
        .route("/llm_embedding/", get(routes::llm_embedding));
    Router::new()
        .nest(BASE_PATH, api)
        .fallback(routes::not_found)
        .layer(middleware::from_fn_with_state(state.clone(), rate_limit))
        .layer(cors(&state.settings().cors_allow))
        .with_state(state)
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state).into_make_service_with_connect_info::<SocketAddr>();
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
