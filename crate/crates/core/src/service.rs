//! HTTP service: `/api/v1/classify`, `/api/v1/labels`, `/api/v1/health`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::classify::{ClassifyRequest, Classifier};
use crate::taxonomy::{DEFAULT_TYPE_NAMES, SEVERITY_NAMES};
use crate::{Error, Result};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_MODEL_DIR: &str = "models/bert_classifier";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub model_dir: PathBuf,
    pub bind: String,
    pub threshold: Option<f64>,
    pub allowed_origins: Vec<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            model_dir: DEFAULT_MODEL_DIR.into(),
            bind: DEFAULT_BIND.into(),
            threshold: None,
            allowed_origins: Vec::new(),
        }
    }
}

impl ServiceConfig {
    /// Reads `MODEL_DIR`, `BIND_ADDR`, `TYPE_THRESHOLD` and `ALLOWED_ORIGINS`
    /// (comma separated) over the defaults.
    pub fn from_env() -> Result<Self> {
        let mut config = ServiceConfig::default();
        if let Ok(dir) = std::env::var("MODEL_DIR") {
            config.model_dir = dir.into();
        }
        if let Ok(bind) = std::env::var("BIND_ADDR") {
            config.bind = bind;
        }
        if let Ok(t) = std::env::var("TYPE_THRESHOLD") {
            let value = t
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("TYPE_THRESHOLD is not a number: {t:?}")))?;
            config.threshold = Some(value);
        }
        if let Ok(origins) = std::env::var("ALLOWED_ORIGINS") {
            config.allowed_origins = parse_origins(&origins);
        }
        Ok(config)
    }
}

pub fn parse_origins(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|o| !o.is_empty()).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub severities: Vec<String>,
    pub types: Vec<String>,
}

#[derive(Clone)]
struct AppState {
    classifier: Option<Arc<Classifier>>,
    labels: Arc<Labels>,
}

fn error_body(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(json!({ "error": reason.into() }))).into_response()
}

async fn health(State(state): State<AppState>) -> Response {
    match &state.classifier {
        Some(c) => Json(json!({ "status": "ok", "model_version": c.model_version() })).into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "status": "loading", "model_version": null })),
        )
            .into_response(),
    }
}

async fn labels(State(state): State<AppState>) -> Json<Labels> {
    Json((*state.labels).clone())
}

async fn classify(
    State(state): State<AppState>,
    body: std::result::Result<Json<ClassifyRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match body {
        Ok(b) => b,
        Err(rejection) => return error_body(StatusCode::BAD_REQUEST, rejection.body_text()),
    };
    let Some(classifier) = state.classifier.clone() else {
        return error_body(StatusCode::SERVICE_UNAVAILABLE, "model not ready");
    };
    if let Err(e) = request.validate() {
        return error_body(StatusCode::BAD_REQUEST, e.to_string());
    }
    match tokio::task::spawn_blocking(move || classifier.classify(&request)).await {
        Ok(Ok(response)) => Json(response).into_response(),
        Ok(Err(e @ (Error::EmptyText | Error::InvalidConfig(_)))) => error_body(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error_body(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error_body(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn cors(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::any()
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()))
    };
    Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
            .allow_headers([axum::http::header::CONTENT_TYPE]),
    )
}

/// Routes over an optional classifier; without one, classify and health answer 503.
pub fn router(classifier: Option<Arc<Classifier>>, allowed_origins: &[String]) -> Router {
    let types = match &classifier {
        Some(c) => c.type_names().to_vec(),
        None => DEFAULT_TYPE_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    let state = AppState {
        classifier,
        labels: Arc::new(Labels {
            severities: SEVERITY_NAMES.iter().map(|s| s.to_string()).collect(),
            types,
        }),
    };
    let app = Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/labels", get(labels))
        .route("/api/v1/classify", post(classify))
        .with_state(state);
    match cors(allowed_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

pub async fn bind(addr: &str) -> Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Bind {
        addr: addr.to_string(),
        reason: e.to_string(),
    })
}

/// Loads the classifier described by `config`; failures here keep the service from starting.
pub fn load_classifier(config: &ServiceConfig) -> Result<Classifier> {
    let classifier = Classifier::load(&config.model_dir)?;
    match config.threshold {
        Some(t) => classifier.with_threshold(t),
        None => Ok(classifier),
    }
}

/// Loads the model, binds and serves until Ctrl-C.
pub fn start(config: &ServiceConfig) -> Result<()> {
    let classifier = Arc::new(load_classifier(config)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io(&config.model_dir, e))?;
    runtime.block_on(async {
        let listener = bind(&config.bind).await?;
        let local: SocketAddr = listener.local_addr().map_err(|e| Error::Bind {
            addr: config.bind.clone(),
            reason: e.to_string(),
        })?;
        log::info!("serving model {} on http://{local}", classifier.model_version());
        let app = router(Some(classifier), &config.allowed_origins);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::Bind {
                addr: config.bind.clone(),
                reason: e.to_string(),
            })
    })
}
