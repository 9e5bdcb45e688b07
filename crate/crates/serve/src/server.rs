//! HTTP JSON API: `/predict`, `/classes`, `/health`, `/recommend`, plus the
//! static web UI bundle.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::extract::multipart::MultipartRejection;
use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Multipart, State};
use axum::handler::HandlerWithoutStateExt;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use cane_core::{ModelConfig, CLASS_NAMES};

use crate::infer::{load_model, predict_bytes, LoadedModel, PredictError};
use crate::reco::RecoProvider;

/// Largest accepted upload.
pub const MAX_UPLOAD_BYTES: usize = 10 * 1024 * 1024;
const MULTIPART_OVERHEAD: usize = 64 * 1024;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

#[derive(Debug, Default)]
struct Inner {
    model: OnceLock<Arc<LoadedModel>>,
    load_error: OnceLock<String>,
    reco: RecoProvider,
}

/// Shared service state. The model is set once and then only read.
#[derive(Debug, Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(reco: RecoProvider) -> Self {
        Self {
            inner: Arc::new(Inner {
                reco,
                ..Inner::default()
            }),
        }
    }

    pub fn with_model(model: LoadedModel, reco: RecoProvider) -> Self {
        let state = Self::new(reco);
        state.set_model(model);
        state
    }

    pub fn set_model(&self, model: LoadedModel) {
        let _ = self.inner.model.set(Arc::new(model));
    }

    pub fn set_load_error(&self, message: String) {
        let _ = self.inner.load_error.set(message);
    }

    pub fn model(&self) -> Option<Arc<LoadedModel>> {
        self.inner.model.get().cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    /// `loading`, `ok` or `error`.
    pub status: String,
    pub checksum: Option<String>,
    pub version: Option<u32>,
    pub model_path: Option<String>,
    pub error: Option<String>,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let h = match (state.model(), state.inner.load_error.get()) {
        (Some(m), _) => Health {
            status: "ok".into(),
            checksum: Some(m.checksum.clone()),
            version: Some(m.format_version),
            model_path: Some(m.path.display().to_string()),
            error: None,
        },
        (None, Some(e)) => Health {
            status: "error".into(),
            checksum: None,
            version: None,
            model_path: None,
            error: Some(e.clone()),
        },
        (None, None) => Health {
            status: "loading".into(),
            checksum: None,
            version: None,
            model_path: None,
            error: None,
        },
    };
    Json(h)
}

async fn classes() -> Json<Vec<&'static str>> {
    Json(CLASS_NAMES.to_vec())
}

/// First file field, or a field named `image` / `file`.
async fn read_upload(mut multipart: Multipart) -> Result<Vec<u8>, ApiError> {
    let multipart_err = |e: axum::extract::multipart::MultipartError| {
        let status = e.status();
        if status == StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(status, "payload_too_large", format!("upload exceeds {MAX_UPLOAD_BYTES} bytes"))
        } else {
            ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text())
        }
    };
    while let Some(field) = multipart.next_field().await.map_err(multipart_err)? {
        let wanted = field.file_name().is_some() || matches!(field.name(), Some("image" | "file"));
        if !wanted {
            continue;
        }
        let bytes = field.bytes().await.map_err(multipart_err)?;
        if bytes.len() > MAX_UPLOAD_BYTES {
            return Err(ApiError::new(
                StatusCode::PAYLOAD_TOO_LARGE,
                "payload_too_large",
                format!("upload of {} bytes exceeds {MAX_UPLOAD_BYTES}", bytes.len()),
            ));
        }
        return Ok(bytes.to_vec());
    }
    Err(ApiError::new(StatusCode::BAD_REQUEST, "missing_image", "no image field in the multipart body"))
}

async fn predict(
    State(state): State<AppState>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<crate::infer::Prediction>, ApiError> {
    let Some(model) = state.model() else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_loading", "the model is not loaded yet"));
    };
    let multipart = multipart.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_multipart", e.body_text()))?;
    let bytes = read_upload(multipart).await?;
    let result = tokio::task::spawn_blocking(move || predict_bytes(&model.model, &bytes))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    match result {
        Ok(p) => Ok(Json(p)),
        Err(PredictError::Decode(reason)) => Err(ApiError::new(StatusCode::BAD_REQUEST, "undecodable_image", reason)),
        Err(e @ PredictError::Model(_)) => {
            tracing::error!(error = %e, "inference failed");
            Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "inference_failed", e.to_string()))
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct RecommendRequest {
    pub disease: String,
}

async fn recommend(
    State(state): State<AppState>,
    body: Result<Json<RecommendRequest>, JsonRejection>,
) -> Result<Json<crate::kb::Recommendation>, ApiError> {
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text()))?;
    state
        .inner
        .reco
        .recommend(&req.disease)
        .await
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_disease", format!("{:?} is not a known class", req.disease)))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/predict", post(predict))
        .route("/classes", get(classes))
        .route("/health", get(health))
        .route("/recommend", post(recommend))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES + MULTIPART_OVERHEAD))
        .layer(TraceLayer::new_for_http())
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).not_found_service(not_found.into_service())),
        None => api.fallback(not_found),
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub model_path: PathBuf,
    pub config: Option<ModelConfig>,
    pub addr: SocketAddr,
    pub static_dir: Option<PathBuf>,
    pub reco: RecoProvider,
}

/// Binds, starts loading the model in the background and serves until ctrl-c.
pub async fn serve(opts: ServeOptions) -> anyhow::Result<()> {
    let state = AppState::new(opts.reco.clone());
    let loader = state.clone();
    let (path, config) = (opts.model_path.clone(), opts.config.clone());
    tokio::task::spawn_blocking(move || match load_model(&path, config.as_ref()) {
        Ok(m) => {
            tracing::info!(path = %m.path.display(), checksum = %m.checksum, "model loaded");
            loader.set_model(m);
        }
        Err(e) => {
            tracing::error!(error = format!("{e:#}"), "model failed to load");
            loader.set_load_error(format!("{e:#}"));
        }
    });
    let static_dir = opts.static_dir.filter(|d| d.is_dir());
    if let Some(d) = &static_dir {
        tracing::info!(dir = %d.display(), "serving static UI");
    }
    let app = router(state, static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(opts.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, reco = opts.reco.endpoint().unwrap_or("local"), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
