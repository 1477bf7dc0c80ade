//! HTTP render service for the panorama viewer.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{rejection::JsonRejection, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use panosplat_core::gaussians::SplatSet;
use panosplat_core::Pose;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::services::ServeDir;

use crate::pipeline::{render_view, RenderMode};

pub const MAX_WIDTH: usize = 4096;
pub const DEFAULT_FOV_DEG: f64 = 90.0;

pub struct AppState {
    pub splats: SplatSet,
    pub near: f64,
    pub far: f64,
    pub suggested_pose: Pose,
    /// Caps concurrent renders; excess requests wait for a permit.
    pub renders: Semaphore,
}

impl AppState {
    pub fn new(
        splats: SplatSet,
        near: f64,
        far: f64,
        suggested_pose: Pose,
        max_concurrent: usize,
    ) -> Self {
        Self {
            splats,
            near,
            far,
            suggested_pose,
            renders: Semaphore::new(max_concurrent.max(1)),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub splat_count: usize,
    pub near: f64,
    pub far: f64,
    pub suggested_pose: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenderRequest {
    pub c2w: Vec<f64>,
    pub width: usize,
    pub mode: String,
    pub fov_deg: Option<f64>,
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

const INDEX: &str = "<!doctype html><title>panosplat</title>\
<p>Render service. GET <code>/api/meta</code>, POST <code>/api/render</code>.</p>";

/// API routes, plus static files from `static_dir` (or a stub index page).
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/meta", get(meta))
        .route("/api/render", post(render))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX) })),
    }
}

async fn meta(State(s): State<Arc<AppState>>) -> Json<Meta> {
    Json(Meta {
        splat_count: s.splats.len(),
        near: s.near,
        far: s.far,
        suggested_pose: s.suggested_pose.to_row_major().to_vec(),
    })
}

fn parse_request(req: &RenderRequest) -> Result<(Pose, RenderMode), ApiError> {
    let m: [f64; 16] = req
        .c2w
        .as_slice()
        .try_into()
        .map_err(|_| bad_request(format!("c2w must have 16 values, got {}", req.c2w.len())))?;
    let pose = Pose::from_row_major(&m).map_err(|e| bad_request(format!("c2w: {e}")))?;
    if req.width == 0 || req.width > MAX_WIDTH {
        return Err(bad_request(format!(
            "width must be in 1..={MAX_WIDTH}, got {}",
            req.width
        )));
    }
    let mode = match req.mode.as_str() {
        "erp" => {
            if !req.width.is_multiple_of(4) {
                return Err(bad_request(format!(
                    "erp width must be a multiple of 4, got {}",
                    req.width
                )));
            }
            RenderMode::Erp
        }
        "pinhole" => {
            let fov_deg = req.fov_deg.unwrap_or(DEFAULT_FOV_DEG);
            if !(fov_deg > 0.0 && fov_deg < 180.0) {
                return Err(bad_request(format!(
                    "fov_deg must be in (0, 180), got {fov_deg}"
                )));
            }
            RenderMode::Pinhole { fov_deg }
        }
        other => {
            return Err(bad_request(format!(
                "mode must be \"erp\" or \"pinhole\", got {other:?}"
            )))
        }
    };
    Ok((pose, mode))
}

async fn render(
    State(s): State<Arc<AppState>>,
    body: Result<Json<RenderRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body.map_err(|e| bad_request(e.body_text()))?;
    let (pose, mode) = parse_request(&req)?;
    let _permit = s.renders.acquire().await.map_err(|_| {
        ApiError(
            StatusCode::SERVICE_UNAVAILABLE,
            "server is shutting down".into(),
        )
    })?;
    let state = s.clone();
    let png = tokio::task::spawn_blocking(move || {
        render_view(&state.splats, &pose, req.width, mode).and_then(|v| v.png())
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
    .map_err(|e| bad_request(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Binds `addr` (failing if it is taken) and serves until Ctrl-C.
pub async fn serve(
    addr: SocketAddr,
    state: Arc<AppState>,
    static_dir: Option<PathBuf>,
) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot listen on {addr}: {e}"))?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
