//! HTTP access to stored run artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tower_http::cors::{Any, CorsLayer};
use wordpull::cloud::HeatmapPayload;
use wordpull::pipeline::{run_pipeline, FailureClass, PipelineConfig, RunArtifact, Scoring};
use wordpull::projector::ProjectorKind;

/// Run id → artifact, backed by `<dir>/<id>.json`.
pub struct ArtifactStore {
    dir: PathBuf,
    runs: RwLock<BTreeMap<String, Arc<RunArtifact>>>,
    writer: Mutex<()>,
}

impl ArtifactStore {
    /// Load every artifact in `dir`, creating it if needed. Files that do not
    /// parse as artifacts are skipped with a warning.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut runs = BTreeMap::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            match RunArtifact::load(&path) {
                Ok(a) => {
                    runs.insert(id.to_string(), Arc::new(a));
                }
                Err(e) => eprintln!("skipping {}: {e}", path.display()),
            }
        }
        Ok(Self { dir, runs: RwLock::new(runs), writer: Mutex::new(()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ids(&self) -> Vec<String> {
        self.runs.read().unwrap().keys().cloned().collect()
    }

    pub fn get(&self, id: &str) -> Option<Arc<RunArtifact>> {
        self.runs.read().unwrap().get(id).cloned()
    }

    /// Persist under a fresh id. Callers hold the writer lock.
    fn insert_new(&self, artifact: RunArtifact) -> io::Result<String> {
        let mut runs = self.runs.write().unwrap();
        let id = (runs.len() + 1..)
            .map(|n| format!("run-{n:04}"))
            .find(|id| !runs.contains_key(id) && !self.dir.join(format!("{id}.json")).exists())
            .expect("unbounded id range");
        fs::write(self.dir.join(format!("{id}.json")), artifact.to_json())?;
        runs.insert(id.clone(), Arc::new(artifact));
        Ok(id)
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn not_found(what: &str, id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
}

type Shared = Arc<ArtifactStore>;

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/runs", get(list_runs).post(post_run))
        .route("/runs/{id}/projection", get(get_projection))
        .route("/runs/{id}/documents/{doc}/heatmap", get(get_heatmap))
        .route("/runs/{id}/cloud", get(get_cloud))
        .route("/runs/{id}/markers", get(get_markers))
        .layer(CorsLayer::new().allow_origin(Any).allow_methods(Any).allow_headers(Any))
        .with_state(store)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub documents: usize,
    pub projector: ProjectorKind,
    pub scoring: Scoring,
    pub scorings: Vec<Scoring>,
}

async fn list_runs(State(store): State<Shared>) -> Json<Vec<RunSummary>> {
    let runs = store.runs.read().unwrap();
    Json(
        runs.iter()
            .map(|(id, a)| RunSummary {
                id: id.clone(),
                documents: a.projection.len(),
                projector: a.traces.projector,
                scoring: a.config.scoring,
                scorings: a.clouds.keys().copied().collect(),
            })
            .collect(),
    )
}

async fn get_projection(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match store.get(&id) {
        Some(a) => Json(&a.projection).into_response(),
        None => not_found("run", &id),
    }
}

async fn get_heatmap(State(store): State<Shared>, UrlPath((id, doc)): UrlPath<(String, String)>) -> Response {
    let Some(a) = store.get(&id) else { return not_found("run", &id) };
    match a.heatmaps.get(&doc) {
        Some(entries) => Json(HeatmapPayload { doc_id: doc, entries: entries.clone() }).into_response(),
        None => not_found("document", &doc),
    }
}

#[derive(Debug, Deserialize)]
struct CloudQuery {
    scoring: Option<String>,
}

async fn get_cloud(State(store): State<Shared>, UrlPath(id): UrlPath<String>, Query(q): Query<CloudQuery>) -> Response {
    let Some(a) = store.get(&id) else { return not_found("run", &id) };
    let scoring = match q.scoring.as_deref() {
        None => a.config.scoring,
        Some(s) => match Scoring::parse(s) {
            Some(s) => s,
            None => return error(StatusCode::BAD_REQUEST, format!("unknown scoring {s:?}")),
        },
    };
    match a.cloud_for(scoring) {
        Some(cloud) => Json(cloud).into_response(),
        None => error(StatusCode::BAD_REQUEST, format!("run {id:?} has no {} scoring", scoring.as_str())),
    }
}

async fn get_markers(State(store): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    match store.get(&id) {
        Some(a) => Json(&a.markers).into_response(),
        None => not_found("run", &id),
    }
}

/// Run a pipeline synchronously. Relative paths in the body resolve against
/// the server's working directory.
async fn post_run(State(store): State<Shared>, body: Bytes) -> Response {
    let text = match std::str::from_utf8(&body) {
        Ok(t) => t.to_string(),
        Err(_) => return error(StatusCode::UNPROCESSABLE_ENTITY, "body is not utf-8"),
    };
    let _guard = store.writer.lock().await;
    let worker = store.clone();
    let result = tokio::task::spawn_blocking(move || {
        let cfg = PipelineConfig::from_json(&text, &std::env::current_dir().unwrap_or_default())?;
        let artifact = run_pipeline(&cfg)?;
        Ok::<_, wordpull::pipeline::PipelineError>(worker.insert_new(artifact))
    })
    .await;
    match result {
        Ok(Ok(Ok(id))) => (StatusCode::CREATED, Json(json!({ "id": id }))).into_response(),
        Ok(Ok(Err(e))) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("cannot store artifact: {e}")),
        Ok(Err(e)) => {
            let status = match e.class {
                FailureClass::Config | FailureClass::Data => StatusCode::UNPROCESSABLE_ENTITY,
                FailureClass::Numeric => StatusCode::INTERNAL_SERVER_ERROR,
            };
            error(status, e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("pipeline task failed: {e}")),
    }
}

pub async fn serve(addr: &str, store: ArtifactStore) -> io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("serving {} runs from {} on http://{}", store.ids().len(), store.dir().display(), listener.local_addr()?);
    axum::serve(listener, router(Arc::new(store))).await
}
