//! HTTP service for the review UI.
//!
//! | method | path | payload |
//! |---|---|---|
//! | GET | `/api/documents` | manifest entries with component counts |
//! | GET | `/api/documents/{id}/components` | entities, triplets, excerpts |
//! | GET | `/api/graph` | the annotated graph |
//! | GET | `/api/schema` | the inferred schema |
//! | GET | `/api/metrics` | a fresh metrics report |
//! | POST | `/api/annotations` | one annotation or a list |
//! | POST | `/api/ground-truth` | missed entities for one document and type |
//!
//! Anything else is served from the UI directory, if one is configured.
//! Writes are serialized and atomic; metrics are recomputed per request.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, Mutex};

use super::{
    annotated_graph, evaluate, load_annotations, load_ground_truth, load_schema, write_atomic, Manifest,
    PipelineConfig, PipelineError, Stage, StageStore, ANNOTATIONS_FILE, GROUND_TRUTH_FILE, MANIFEST,
};
use crate::chunker::{split, SplitConfig};
use crate::eval::{compute_report, Annotation, EvalError, GroundTruth};
use crate::extractor::label_key;
use crate::llm::Tokenizer;
use crate::model::{export_graph, ExportFormat};

pub struct AppState {
    pub out_dir: PathBuf,
    pub input_dir: PathBuf,
    pub ui_dir: Option<PathBuf>,
    pub split: SplitConfig,
    pub tokenizer: Arc<dyn Tokenizer>,
    writes: Mutex<()>,
}

impl AppState {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            out_dir: config.out_dir.clone(),
            input_dir: config.input_dir.clone(),
            ui_dir: config.ui_dir.clone(),
            split: config.split,
            tokenizer: config.backend.tokenizer.build(),
            writes: Mutex::new(()),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Missing(m) => Self::not_found(m),
            PipelineError::Eval(e) => e.into(),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let status = match &e {
            EvalError::UnknownTarget { .. } => StatusCode::NOT_FOUND,
            EvalError::Conflicts(_) => StatusCode::CONFLICT,
            EvalError::InvalidAnnotation { .. } => StatusCode::BAD_REQUEST,
            EvalError::GroundTruth(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/documents", get(documents))
        .route("/api/documents/{id}/components", get(components))
        .route("/api/graph", get(graph))
        .route("/api/schema", get(schema))
        .route("/api/metrics", get(metrics))
        .route("/api/annotations", post(annotations))
        .route("/api/ground-truth", post(ground_truth))
        .fallback(static_files)
        .with_state(state)
}

fn manifest(state: &AppState) -> ApiResult<Manifest> {
    let store = StageStore::new(&state.out_dir);
    if store.record(Stage::Ingest).is_none() {
        return Err(ApiError::not_found("no corpus manifest; run the pipeline first"));
    }
    let bytes = store.read(Stage::Ingest, MANIFEST)?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::from(PipelineError::from(e)))
}

#[derive(Serialize)]
struct DocumentSummary {
    id: String,
    file: String,
    tokens: usize,
    entities: usize,
    triplets: usize,
}

fn in_document(provenance: &[crate::model::ProvenanceRef], doc: &str) -> bool {
    provenance.iter().any(|p| p.document_id == doc)
}

async fn documents(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<DocumentSummary>>> {
    let manifest = manifest(&state)?;
    let graph = annotated_graph(&state.out_dir).unwrap_or_default();
    Ok(Json(
        manifest
            .documents
            .into_iter()
            .map(|d| DocumentSummary {
                entities: graph.entities().filter(|e| in_document(&e.provenance, &d.id)).count(),
                triplets: graph.triplets().filter(|t| in_document(&t.provenance, &d.id)).count(),
                id: d.id,
                file: d.file,
                tokens: d.tokens,
            })
            .collect(),
    ))
}

async fn components(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let manifest = manifest(&state)?;
    let doc = manifest
        .document(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown document `{id}`")))?;
    let path = state.input_dir.join(&doc.file);
    let text = std::fs::read_to_string(&path).map_err(|e| ApiError::from(PipelineError::io(&path, e)))?;
    let chunks = split(&text, &state.split, state.tokenizer.as_ref())
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let excerpt = |index: usize| chunks.get(index).map(|c| c.text.clone()).unwrap_or_default();
    let graph = annotated_graph(&state.out_dir)?;

    let entities: Vec<Value> = graph
        .entities()
        .filter(|e| in_document(&e.provenance, &id))
        .map(|e| {
            let excerpts: Vec<String> = e
                .provenance
                .iter()
                .filter(|p| p.document_id == id)
                .map(|p| excerpt(p.chunk_index))
                .collect();
            json!({
                "id": e.id, "label": e.label, "description": e.description, "types": e.types,
                "provenance": e.provenance, "excerpts": excerpts,
            })
        })
        .collect();
    let label = |eid| graph.entity(eid).map(|e| e.label.clone()).unwrap_or_default();
    let triplets: Vec<Value> = graph
        .triplets()
        .filter(|t| in_document(&t.provenance, &id))
        .map(|t| {
            let predicate = graph.predicate(&t.predicate);
            let chunk = t
                .provenance
                .iter()
                .find(|p| p.document_id == id)
                .map_or(0, |p| p.chunk_index);
            json!({
                "id": t.id,
                "subject": { "id": t.subject, "label": label(&t.subject) },
                "predicate": {
                    "id": t.predicate,
                    "label": predicate.map(|p| p.label.clone()),
                    "description": predicate.and_then(|p| p.description.clone()),
                },
                "object": { "id": t.object, "label": label(&t.object) },
                "provenance": t.provenance,
                "excerpt": excerpt(chunk),
            })
        })
        .collect();
    Ok(Json(json!({
        "document": doc,
        "text": text,
        "entities": entities,
        "triplets": triplets,
        "qualifying_types": GroundTruth::qualifying_types(&graph),
    })))
}

async fn graph(State(state): State<Arc<AppState>>) -> ApiResult<Response> {
    let g = annotated_graph(&state.out_dir)?;
    Ok(json_bytes(export_graph(&g, ExportFormat::Document)))
}

async fn schema(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let s = load_schema(&state.out_dir)?;
    Ok(Json(serde_json::to_value(s).map_err(PipelineError::from)?))
}

async fn metrics(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let report = evaluate(&state.out_dir)?;
    let mut value = serde_json::to_value(&report).map_err(PipelineError::from)?;
    value["table"] = Value::String(report.to_table());
    Ok(Json(value))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<Annotation>),
    One(Box<Annotation>),
}

async fn annotations(State(state): State<Arc<AppState>>, Json(body): Json<OneOrMany>) -> ApiResult<Json<Value>> {
    let incoming = match body {
        OneOrMany::Many(v) => v,
        OneOrMany::One(a) => vec![*a],
    };
    let _guard = state.writes.lock().await;
    let graph = annotated_graph(&state.out_dir)?;
    let mut set = load_annotations(&state.out_dir)?;
    for a in &incoming {
        set.push(a.clone())?;
    }
    // Rejects unknown targets and self-conflicts before anything is stored.
    compute_report(&graph, &set, &load_ground_truth(&state.out_dir)?)?;
    persist(&state.out_dir.join(ANNOTATIONS_FILE), &set)?;
    Ok(Json(json!({ "accepted": incoming.len(), "total": set.len() })))
}

#[derive(Deserialize)]
struct MissedEntities {
    document: String,
    #[serde(rename = "type")]
    type_label: String,
    missed: Vec<String>,
}

async fn ground_truth(State(state): State<Arc<AppState>>, Json(body): Json<MissedEntities>) -> ApiResult<Json<Value>> {
    if manifest(&state)?.document(&body.document).is_none() {
        return Err(ApiError::not_found(format!("unknown document `{}`", body.document)));
    }
    let _guard = state.writes.lock().await;
    let graph = annotated_graph(&state.out_dir)?;
    let mut gt = load_ground_truth(&state.out_dir)?;
    let mut existing: BTreeSet<String> = gt
        .documents
        .get(&body.document)
        .and_then(|types| types.get(&body.type_label))
        .map(|labels| labels.iter().map(|l| label_key(l)).collect())
        .unwrap_or_default();
    let mut added = 0;
    for label in body.missed.iter().filter(|l| !l.trim().is_empty()) {
        if existing.insert(label_key(label)) {
            gt.add(&body.document, &body.type_label, label.trim());
            added += 1;
        }
    }
    compute_report(&graph, &load_annotations(&state.out_dir)?, &gt)?;
    persist(&state.out_dir.join(GROUND_TRUTH_FILE), &gt)?;
    Ok(Json(json!({ "added": added, "missed_total": gt.missed_count() })))
}

fn persist<T: Serialize>(path: &Path, value: &T) -> ApiResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(PipelineError::from)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn json_bytes(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

async fn static_files(State(state): State<Arc<AppState>>, uri: Uri) -> ApiResult<Response> {
    let path = uri.path();
    if path.starts_with("/api/") {
        return Err(ApiError::not_found(format!("no endpoint {path}")));
    }
    let Some(root) = &state.ui_dir else {
        return Err(ApiError::not_found("no UI directory configured"));
    };
    let relative = path.trim_start_matches('/');
    let relative = if relative.is_empty() { "index.html" } else { relative };
    let rel = Path::new(relative);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(ApiError::not_found(path.to_string()));
    }
    let file = root.join(rel);
    let bytes = std::fs::read(&file).map_err(|_| ApiError::not_found(path.to_string()))?;
    Ok(([(header::CONTENT_TYPE, content_type(&file))], bytes).into_response())
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Binds `addr` and serves in the background. Binding errors, such as a
/// busy port, are returned before this function does.
pub fn spawn(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let _ = axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves until the process is interrupted.
pub fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await
    })
}
