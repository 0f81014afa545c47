//! HTTP render service over an immutable snapshot.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use deformsplat::io::Snapshot;
use deformsplat::math::Vec3;
use serde::Serialize;

use crate::{parse_pose, render_png, MAX_RENDER_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianCounts {
    pub deformable: usize,
    #[serde(rename = "static")]
    pub static_set: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneMeta {
    pub resolution: [usize; 2],
    pub time_range: [f64; 2],
    pub scene_extent: f64,
    pub suggested_orbit_center: [f64; 3],
    pub gaussian_counts: GaussianCounts,
}

impl SceneMeta {
    pub fn from_snapshot(snapshot: &Snapshot) -> Self {
        let scene = &snapshot.scene;
        let n = scene.len();
        let center = if n == 0 {
            Vec3::zeros()
        } else {
            scene
                .deformable
                .iter()
                .chain(&scene.static_set)
                .map(|g| g.position)
                .sum::<Vec3>()
                / n as f64
        };
        Self {
            resolution: snapshot.meta.resolution,
            time_range: snapshot.meta.time_range,
            scene_extent: scene.scene_extent,
            suggested_orbit_center: [center.x, center.y, center.z],
            gaussian_counts: GaussianCounts {
                deformable: scene.deformable.len(),
                static_set: scene.static_set.len(),
            },
        }
    }
}

struct AppState {
    snapshot: Snapshot,
    meta: SceneMeta,
}

/// Routes `/healthz`, `/meta` and `/render` over a shared snapshot.
pub fn router(snapshot: Snapshot) -> Router {
    let meta = SceneMeta::from_snapshot(&snapshot);
    let state = Arc::new(AppState { snapshot, meta });
    Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/meta", get(meta_handler))
        .route("/render", get(render_handler))
        .with_state(state)
}

fn bad_request(message: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": message.into() });
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

async fn meta_handler(State(state): State<Arc<AppState>>) -> Json<SceneMeta> {
    Json(state.meta.clone())
}

/// Validated `/render` query.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderQuery {
    pub pose: nalgebra::Matrix4<f64>,
    pub t: f64,
    pub width: Option<usize>,
    pub height: Option<usize>,
}

/// Parses `pose`, `t`, `w` and `h`. Sizes above the cap are clamped to it
/// and `t` is clamped to `[0, 1]`.
pub fn parse_render_query(q: &HashMap<String, String>) -> Result<RenderQuery, String> {
    let pose = q.get("pose").ok_or("missing `pose` parameter")?;
    let pose = parse_pose(pose).map_err(|e| e.to_string())?;
    let t = match q.get("t") {
        None => 0.0,
        Some(s) => s
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("`t` must be a finite number, got `{s}`"))?,
    };
    let size = |key: &str| -> Result<Option<usize>, String> {
        match q.get(key) {
            None => Ok(None),
            Some(s) => match s.trim().parse::<usize>() {
                Ok(0) | Err(_) => Err(format!("`{key}` must be a positive integer, got `{s}`")),
                Ok(v) => Ok(Some(v.min(MAX_RENDER_SIZE))),
            },
        }
    };
    Ok(RenderQuery {
        pose,
        t: t.clamp(0.0, 1.0),
        width: size("w")?,
        height: size("h")?,
    })
}

async fn render_handler(State(state): State<Arc<AppState>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let req = match parse_render_query(&q) {
        Ok(r) => r,
        Err(e) => return bad_request(e),
    };
    let result = tokio::task::spawn_blocking(move || render_png(&state.snapshot, &req.pose, req.t, req.width, req.height)).await;
    match result {
        Ok(Ok(png)) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Ok(Err(e)) => bad_request(e.to_string()),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(serde_json::json!({ "error": e.to_string() }))).into_response(),
    }
}

/// Serves the snapshot on `0.0.0.0:port` until the process is stopped.
pub async fn serve(snapshot: Snapshot, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(snapshot)).await
}
