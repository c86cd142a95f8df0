//! HTTP front end for a loaded [`QaPipeline`].
//!
//! The pipeline is loaded once and shared read-only by every request.
//! Endpoints:
//!
//! * `GET /health`: liveness and the embedding fingerprint
//! * `GET /entities?prefix=&limit=`: autocomplete over entity names and synonyms
//! * `POST /ask`: answers a natural-language question
//! * `GET /model/info`: dimensions and vocabulary hashes
//!
//! Every error body is `{"code": ..., "message": ...}` plus code-specific fields.

mod config;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kgqa_core::gazetteer::Span;
use kgqa_core::qa::{QaError, QaPipeline};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tower_http::cors::CorsLayer;

pub use config::{ConfigError, Limits, ServiceConfig, DEFAULT_BIND, DEFAULT_TOP_K_CAP, ENV_PREFIX};

pub const DEFAULT_ENTITY_LIMIT: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load pipeline: {0}")]
    Pipeline(#[from] QaError),
    #[error("cannot bind {address}")]
    Bind {
        address: String,
        #[source]
        source: std::io::Error,
    },
    #[error("server error")]
    Serve(#[source] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub d: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_triples: usize,
    /// Hex-encoded vocabulary hashes, as stored in the checkpoints.
    pub entity_hash: String,
    pub relation_hash: String,
    pub model_fingerprint: String,
    pub hop_classes: Vec<u8>,
    pub default_top_k: usize,
    pub top_k_cap: usize,
}

/// Shared, immutable request state.
pub struct AppState {
    pipeline: QaPipeline,
    limits: Limits,
    info: ModelInfo,
}

impl AppState {
    pub fn new(pipeline: QaPipeline, limits: Limits) -> Self {
        let info = ModelInfo {
            d: pipeline.model.dim(),
            num_entities: pipeline.kg.num_entities(),
            num_relations: pipeline.kg.num_relations(),
            num_triples: pipeline.kg.num_triples(),
            entity_hash: format!("{:016x}", pipeline.kg.entity_hash()),
            relation_hash: format!("{:016x}", pipeline.kg.relation_hash()),
            model_fingerprint: pipeline.model.fingerprint(),
            hop_classes: pipeline.encoders.keys().copied().collect(),
            default_top_k: limits.default_top_k,
            top_k_cap: limits.top_k_cap,
        };
        Self {
            pipeline,
            limits,
            info,
        }
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    pub fn pipeline(&self) -> &QaPipeline {
        &self.pipeline
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskRequest {
    pub question: String,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadEntity {
    pub id: String,
    pub name: String,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopClass {
    pub class: u8,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub id: String,
    pub name: String,
    pub kind: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub question: String,
    pub head: HeadEntity,
    pub hops: HopClass,
    pub answers: Vec<Answer>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySummary {
    pub id: String,
    pub name: String,
    pub kind: String,
}

/// A JSON error body with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Map<String, Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            extra: Map::new(),
        }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_owned(), value);
        self
    }

    fn internal(err: impl std::fmt::Display) -> Self {
        tracing::error!("request failed: {err}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "internal server error")
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        self.status
    }

    /// Machine-readable error code, e.g. `no_entity`.
    pub fn code(&self) -> &'static str {
        self.code
    }

    pub fn message(&self) -> &str {
        &self.message
    }

    /// Code-specific fields of the error body.
    pub fn details(&self) -> &Map<String, Value> {
        &self.extra
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = Map::new();
        body.insert("code".into(), Value::from(self.code));
        body.insert("message".into(), Value::from(self.message));
        body.extend(self.extra);
        (self.status, Json(Value::Object(body))).into_response()
    }
}

fn entity_summary(pipeline: &QaPipeline, e: usize) -> EntitySummary {
    EntitySummary {
        id: pipeline.kg.entity_id(e).unwrap_or_default().to_owned(),
        name: pipeline.kg.display_name(e).to_owned(),
        kind: pipeline.kg.kind(e).to_owned(),
    }
}

/// Runs one `/ask` request against the pipeline.
pub fn handle_ask(state: &AppState, request: &AskRequest) -> Result<AskResponse, ApiError> {
    if request.question.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "empty_question",
            "question must not be empty",
        ));
    }
    let top_k = request.top_k.unwrap_or(state.limits.default_top_k);
    if top_k == 0 || top_k > state.limits.top_k_cap {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_top_k",
            format!("top_k must lie in 1..={}", state.limits.top_k_cap),
        )
        .with("top_k_cap", json!(state.limits.top_k_cap)));
    }
    let p = &state.pipeline;
    let set = p.answer_question(&request.question, Some(top_k)).map_err(|e| match e {
        QaError::NoEntity { normalized, .. } => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "no_entity",
            "no known entity was found in the question",
        )
        .with("normalized_question", json!(normalized)),
        QaError::AmbiguousHead {
            surface,
            span,
            candidates,
            ..
        } => {
            let candidates: Vec<EntitySummary> =
                candidates.iter().map(|&c| entity_summary(p, c)).collect();
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "ambiguity",
                format!("\"{surface}\" names {} different entities", candidates.len()),
            )
            .with("surface", json!(surface))
            .with("span", json!(span))
            .with("candidates", json!(candidates))
        }
        other => ApiError::internal(other),
    })?;
    let head = entity_summary(p, set.head);
    Ok(AskResponse {
        question: request.question.clone(),
        head: HeadEntity {
            id: head.id,
            name: head.name,
            span: set.span,
        },
        hops: HopClass {
            class: set.hops.hops,
            probabilities: set.hops.probabilities.to_vec(),
        },
        answers: set
            .answers
            .iter()
            .map(|a| {
                let s = entity_summary(p, a.entity);
                Answer {
                    id: s.id,
                    name: s.name,
                    kind: s.kind,
                    score: a.score,
                }
            })
            .collect(),
    })
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "model_fingerprint": state.info.model_fingerprint,
    }))
}

async fn model_info(State(state): State<Arc<AppState>>) -> Json<ModelInfo> {
    Json(state.info.clone())
}

#[derive(Debug, Deserialize)]
struct EntityQuery {
    #[serde(default)]
    prefix: String,
    limit: Option<usize>,
}

async fn entities(
    State(state): State<Arc<AppState>>,
    Query(q): Query<EntityQuery>,
) -> Json<Vec<EntitySummary>> {
    let limit = q.limit.unwrap_or(DEFAULT_ENTITY_LIMIT);
    let p = &state.pipeline;
    Json(
        p.gazetteer
            .prefix_search(&q.prefix, limit)
            .into_iter()
            .map(|e| entity_summary(p, e))
            .collect(),
    )
}

async fn ask(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<AskResponse>, ApiError> {
    let request: AskRequest = serde_json::from_slice(&body).map_err(|e| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_request",
            format!("request body must be {{\"question\": string, \"top_k\"?: integer}}: {e}"),
        )
    })?;
    let response = tokio::task::spawn_blocking(move || handle_ask(&state, &request))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(response))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/entities", get(entities))
        .route("/ask", post(ask))
        .route("/model/info", get(model_info))
        .fallback(not_found)
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Loads the pipeline described by `config`.
pub fn load_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let limits = config.limits()?;
    let pipeline = QaPipeline::load(&config.pipeline_paths()?)?;
    Ok(AppState::new(pipeline, limits))
}

/// Serves until ctrl-c.
pub async fn serve(state: AppState, address: &str) -> Result<(), ServiceError> {
    let listener = tokio::net::TcpListener::bind(address)
        .await
        .map_err(|source| ServiceError::Bind {
            address: address.to_owned(),
            source,
        })?;
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on<F>(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: F,
) -> Result<(), ServiceError>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let local = listener.local_addr().map_err(ServiceError::Serve)?;
    tracing::info!("listening on http://{local}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServiceError::Serve)
}
