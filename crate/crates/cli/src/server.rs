use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use draaseq::inference::{chat_respond, ChatOptions};
use draaseq::train::{Checkpoint, EpochRecord, TrainConfig};
use draaseq::Error;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::CliResult;

pub const MAX_BODY_BYTES: usize = 64 * 1024;
/// Upper bound on a client-requested decode length.
pub const MAX_DECODE_LEN: usize = 256;
const HISTORY_TAIL: usize = 5;

pub struct AppState {
    pub checkpoint: Checkpoint,
    pub model_id: String,
}

impl AppState {
    pub fn new(checkpoint: Checkpoint) -> CliResult<Self> {
        let model_id = checkpoint.model_id()?;
        Ok(AppState {
            checkpoint,
            model_id,
        })
    }
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub message: String,
    #[serde(default)]
    pub max_len: Option<usize>,
    #[serde(default)]
    pub include_attention: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChatResponse {
    pub reply: String,
    pub tokens: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub attention: Option<Vec<Vec<f64>>>,
    pub latency_ms: f64,
    pub model_id: String,
    pub all_unknown: bool,
}

#[derive(Debug, Serialize)]
struct ModelInfo<'a> {
    model_id: &'a str,
    config: &'a TrainConfig,
    parameter_count: usize,
    vocab_size: usize,
    best_epoch: Option<usize>,
    corpus_fingerprint: String,
    history_tail: &'a [EpochRecord],
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "model_id": state.model_id }))
}

async fn model(State(state): State<Arc<AppState>>) -> Response {
    let ckpt = &state.checkpoint;
    let tail = ckpt.history.len().saturating_sub(HISTORY_TAIL);
    Json(ModelInfo {
        model_id: &state.model_id,
        config: &ckpt.config,
        parameter_count: ckpt.params.dims().parameter_count(),
        vocab_size: ckpt.vocab.len(),
        best_epoch: ckpt.best_epoch,
        corpus_fingerprint: format!("{:016x}", ckpt.corpus_fingerprint),
        history_tail: &ckpt.history[tail..],
    })
    .into_response()
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            return error(
                StatusCode::BAD_REQUEST,
                format!("invalid request body: {e}"),
            )
        }
    };
    if let Some(n) = req.max_len {
        if n == 0 || n > MAX_DECODE_LEN {
            return error(
                StatusCode::BAD_REQUEST,
                format!("max_len must be between 1 and {MAX_DECODE_LEN}"),
            );
        }
    }
    let options = ChatOptions {
        max_len: req.max_len,
        include_attention: req.include_attention,
    };
    let worker = Arc::clone(&state);
    let result = tokio::task::spawn_blocking(move || {
        chat_respond(&worker.checkpoint, &req.message, &options)
    })
    .await;
    match result {
        Ok(Ok(reply)) => Json(ChatResponse {
            reply: reply.reply_text,
            tokens: reply.reply_tokens,
            attention: options.include_attention.then_some(reply.attention),
            latency_ms: reply.latency_ms,
            model_id: state.model_id.clone(),
            all_unknown: reply.all_unknown,
        })
        .into_response(),
        Ok(Err(e @ (Error::EmptyUtterance | Error::EmptyInput))) => {
            error(StatusCode::BAD_REQUEST, e.to_string())
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn log_request(req: Request, next: Next) -> Response {
    let started = Instant::now();
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let response = next.run(req).await;
    log::info!(
        "{method} {path} {} {:.3}ms",
        response.status().as_u16(),
        started.elapsed().as_secs_f64() * 1e3
    );
    response
}

/// All routes. When `static_dir` exists it is served for every other path.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let mut app = Router::new()
        .route("/v1/chat", post(chat))
        .route("/v1/health", get(health))
        .route("/v1/model", get(model))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    if let Some(dir) = static_dir.filter(|d| d.is_dir()) {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(middleware::from_fn(log_request))
}

pub struct ServeArgs {
    pub checkpoint: PathBuf,
    pub bind: String,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

pub async fn serve(args: ServeArgs) -> CliResult<()> {
    let checkpoint = draaseq::train::load_checkpoint(&args.checkpoint)?;
    let state = Arc::new(AppState::new(checkpoint)?);
    let addr: SocketAddr = format!("{}:{}", args.bind, args.port)
        .parse()
        .map_err(|e| format!("invalid bind address {}:{}: {e}", args.bind, args.port))?;
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|e| format!("cannot bind {addr}: {e}"))?;
    let static_dir = args.static_dir.as_deref().filter(|d| d.is_dir());
    log::info!(
        "serving model {} on http://{}{}",
        state.model_id,
        listener.local_addr()?,
        static_dir
            .map(|d| format!(" with static files from {}", d.display()))
            .unwrap_or_default()
    );
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
