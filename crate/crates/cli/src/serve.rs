//! Recording server: hands out sessions with the arena layout and stores
//! uploaded trajectories as raw CSV files for `forage preprocess`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forage::data::{RawTrajectory, Sample};
use forage::env::sample_coins;
use forage::ArenaConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

const PLACEHOLDER: &str = "<!doctype html><title>forage</title>\
<p>Recording API is up. Serve the capture UI with <code>--static &lt;dir&gt;</code>.</p>";

pub struct AppState {
    config: ArenaConfig,
    coins: Vec<[f64; 2]>,
    out_dir: PathBuf,
    next_id: AtomicU64,
    /// Open sessions; `true` once a trajectory has been stored.
    sessions: Mutex<HashMap<String, bool>>,
}

impl AppState {
    /// Session numbers continue after any recordings already in `out_dir`.
    pub fn new(config: ArenaConfig, out_dir: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let out_dir = out_dir.into();
        std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let mut last = 0;
        for entry in std::fs::read_dir(&out_dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_prefix("session-").and_then(|r| r.strip_suffix(".csv")) {
                last = last.max(n.parse().unwrap_or(0));
            }
        }
        Ok(Self {
            coins: sample_coins(&config, config.coin_seed).positions(),
            config,
            out_dir,
            next_id: AtomicU64::new(last + 1),
            sessions: Mutex::new(HashMap::new()),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NewSession {
    pub session_id: String,
    pub config: ArenaConfig,
    pub coins: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Upload {
    pub samples: Vec<[f64; 3]>,
    pub reported_coins: u32,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn new_session(State(app): State<Arc<AppState>>) -> Json<NewSession> {
    let id = format!("{:06}", app.next_id.fetch_add(1, Ordering::SeqCst));
    app.sessions.lock().expect("session lock").insert(id.clone(), false);
    log::info!("session {id} opened");
    Json(NewSession {
        session_id: id,
        config: app.config.clone(),
        coins: app.coins.clone(),
    })
}

async fn upload(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<Upload>, JsonRejection>,
) -> Response {
    match app.sessions.lock().expect("session lock").get(&id) {
        None => return error(StatusCode::NOT_FOUND, format!("unknown session {id}")),
        Some(true) => return error(StatusCode::CONFLICT, format!("session {id} already uploaded")),
        Some(false) => {}
    }
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let samples = body.samples.iter().map(|&[t, x, y]| Sample { t, x, y }).collect();
    let raw = match RawTrajectory::new(samples).and_then(|r| r.check_bounds(&app.config).map(|_| r)) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let csv = app.out_dir.join(format!("session-{id}.csv"));
    let meta = app.out_dir.join(format!("session-{id}.json"));
    let meta_doc = json!({ "session_id": id, "reported_coins": body.reported_coins, "samples": raw.len() });
    let written = std::fs::write(&csv, raw.to_csv()).and_then(|_| std::fs::write(&meta, meta_doc.to_string()));
    if let Err(e) = written {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("writing {}: {e}", csv.display()));
    }
    // mark only after the files exist, so a failed write can be retried
    app.sessions.lock().expect("session lock").insert(id.clone(), true);
    log::info!("session {id}: {} samples, {} coins reported", raw.len(), body.reported_coins);
    (
        StatusCode::CREATED,
        Json(json!({ "session_id": id, "samples": raw.len(), "file": csv.file_name().map(|f| f.to_string_lossy()) })),
    )
        .into_response()
}

pub fn router(app: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/session/new", get(new_session))
        .route("/api/session/{id}/trajectory", post(upload))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

pub async fn serve(port: u16, app: AppState, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .with_context(|| format!("cannot listen on port {port} (is it busy?)"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    println!("listening on http://{}", listener.local_addr()?);
    let app = router(Arc::new(app), static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
