//! Stateless HTTP inference service.
//!
//! * `GET /health` returns `{"status":"ok","model_hash":...}`.
//! * `POST /analyze` takes PNG or JPEG bytes and returns the analysis JSON;
//!   `?overlay=1` adds a base64 PNG of the annotated image.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};
use smearscope_core::analysis::{analyze_image, model_hash, render_overlay, PipelineConfig};
use smearscope_core::classification::StageModel;
use smearscope_core::imaging::io;

pub const MAX_BODY_BYTES: usize = 20 * 1024 * 1024;
pub const OVERLAY_FIELD: &str = "overlay_png_base64";

/// Read-only after startup.
pub struct AppState {
    pub model: StageModel,
    pub config: PipelineConfig,
    pub model_hash: String,
}

impl AppState {
    pub fn new(model: StageModel, config: PipelineConfig) -> Self {
        let model_hash = model_hash(&model);
        Self {
            model,
            config,
            model_hash,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/analyze", post(analyze))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({"status": "ok", "model_hash": state.model_hash}))
}

#[derive(Debug, Deserialize)]
struct AnalyzeParams {
    #[serde(default)]
    overlay: Option<String>,
}

fn error(status: StatusCode, code: &str, detail: Option<String>) -> Response {
    let mut body = json!({ "error": code });
    if let Some(d) = detail {
        body["detail"] = Value::String(d);
    }
    (status, Json(body)).into_response()
}

async fn analyze(
    State(state): State<Arc<AppState>>,
    Query(params): Query<AnalyzeParams>,
    body: Bytes,
) -> Response {
    let want_overlay = matches!(params.overlay.as_deref(), Some("1") | Some("true"));
    let img = match io::decode(&body) {
        Ok(img) => img,
        Err(_) => return error(StatusCode::BAD_REQUEST, "decode_failed", None),
    };
    let work = tokio::task::spawn_blocking(move || {
        let result = analyze_image(&img, &state.config, &state.model)?;
        let mut value = serde_json::to_value(&result)?;
        if want_overlay {
            let png = io::encode_png(&render_overlay(&img, &result))?;
            value[OVERLAY_FIELD] =
                Value::String(base64::engine::general_purpose::STANDARD.encode(png));
        }
        Ok::<_, smearscope_core::Error>(value)
    });
    match work.await {
        Ok(Ok(value)) => Json(value).into_response(),
        Ok(Err(e)) => error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "analysis_failed",
            Some(e.to_string()),
        ),
        Err(e) => error(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            Some(e.to_string()),
        ),
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(addr: &str, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
