//! A single-node HTTP/JSON service over a directory of indices.
//!
//! Endpoints: `PUT /{index}`, `POST /{index}/_bulk` (NDJSON),
//! `GET|POST /{index}/_search`, `GET|POST /{index}/_count`,
//! `POST /{index}/_refresh`, `GET /{index}/_stats`, `POST /_reindex`
//! and `GET /_health`.

use std::collections::HashMap;
use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::AnalyzerConfig;
use crate::bulk::parse_json_record;
use crate::index::{AddOutcome, Index, IndexError, NewDocument};
use crate::metrics::snapshot_stats;
use crate::query::{QueryAst, QueryError};
use crate::shard::{merge_indices, MergeOptions, MergeSource, ShardError};

pub const DEFAULT_PORT: u16 = 9200;
pub const DEFAULT_MAX_BODY_BYTES: usize = 100 * 1024 * 1024;
const SETTINGS_FILE: &str = "settings.json";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    pub max_body_bytes: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            data_dir: PathBuf::from("data"),
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot open index {name}: {source}")]
    Open { name: String, source: IndexError },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexSettings {
    #[serde(default)]
    dedup: bool,
}

struct Served {
    index: Arc<Index>,
    settings: IndexSettings,
    /// Serializes writers; readers go straight to the index snapshot.
    writer: tokio::sync::Mutex<()>,
}

struct AppState {
    data_dir: PathBuf,
    indices: RwLock<HashMap<String, Arc<Served>>>,
}

impl AppState {
    fn get(&self, name: &str) -> Result<Arc<Served>, ApiError> {
        self.indices
            .read()
            .expect("index table poisoned")
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "index_not_found", format!("no such index: {name}")))
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    kind: &'static str,
    reason: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, reason: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            reason: reason.into(),
        }
    }

    fn bad_request(kind: &'static str, reason: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, kind, reason)
    }

    fn internal(reason: impl ToString) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal_error", reason.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": {"type": self.kind, "reason": self.reason},
            "status": self.status.as_u16(),
        });
        (self.status, Json(body)).into_response()
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        ApiError::bad_request("bad_query", e.to_string())
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        ApiError::internal(e)
    }
}

type ApiResult = Result<Response, ApiError>;

/// Lowercase ASCII letters, digits, `_` and `-`; a leading `_` is reserved
/// for endpoints.
pub fn valid_index_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('_')
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

fn load_settings(dir: &Path) -> IndexSettings {
    std::fs::read(dir.join(SETTINGS_FILE))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default()
}

fn open_existing(data_dir: &Path) -> Result<HashMap<String, Arc<Served>>, ServerError> {
    let mut out = HashMap::new();
    for entry in std::fs::read_dir(data_dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let dir = entry.path();
        if !valid_index_name(&name) || !dir.join("meta.json").is_file() {
            continue;
        }
        let index = Index::open(&dir).map_err(|source| ServerError::Open {
            name: name.clone(),
            source,
        })?;
        log::info!("opened index {name} ({} docs)", index.snapshot().doc_count());
        out.insert(
            name,
            Arc::new(Served {
                index: Arc::new(index),
                settings: load_settings(&dir),
                writer: tokio::sync::Mutex::new(()),
            }),
        );
    }
    Ok(out)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)
}

fn parse_body<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("parse_exception", e.to_string()))
}

fn parse_query(v: Option<Value>) -> Result<QueryAst, ApiError> {
    match v {
        None => Ok(QueryAst::match_all()),
        Some(v) => QueryAst::from_json(&v).map_err(|e| ApiError::bad_request("bad_query", e.to_string())),
    }
}

#[derive(Debug, Default, Deserialize)]
struct CreateBody {
    #[serde(default)]
    analyzer: Option<AnalyzerConfig>,
    #[serde(default)]
    dedup: bool,
}

#[derive(Debug, Default, Deserialize)]
struct CreateParams {
    #[serde(default)]
    exist_ok: bool,
}

async fn create_index(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    Query(params): Query<CreateParams>,
    body: Bytes,
) -> ApiResult {
    if !valid_index_name(&name) {
        return Err(ApiError::bad_request(
            "invalid_index_name",
            format!("index name {name:?} must match [a-z0-9_-]+ and not start with _"),
        ));
    }
    let req: CreateBody = parse_body(&body)?;
    if state.indices.read().expect("index table poisoned").contains_key(&name) {
        return if params.exist_ok {
            Ok((StatusCode::OK, Json(json!({"acknowledged": true, "index": name, "created": false}))).into_response())
        } else {
            Err(ApiError::new(StatusCode::CONFLICT, "resource_already_exists", format!("index {name} already exists")))
        };
    }
    let dir = state.data_dir.join(&name);
    let settings = IndexSettings { dedup: req.dedup };
    let index = {
        let (dir, settings) = (dir.clone(), settings.clone());
        blocking(move || -> Result<Index, IndexError> {
            let index = Index::create(&dir, req.analyzer.unwrap_or_default())?;
            let bytes = serde_json::to_vec(&settings).expect("settings serialize");
            std::fs::write(dir.join(SETTINGS_FILE), bytes)?;
            Ok(index)
        })
        .await?
    };
    let index = match index {
        Ok(i) => i,
        Err(IndexError::AlreadyExists(_)) => {
            return Err(ApiError::new(StatusCode::CONFLICT, "resource_already_exists", format!("index {name} already exists")))
        }
        Err(e) => return Err(e.into()),
    };
    let mut table = state.indices.write().expect("index table poisoned");
    if table.contains_key(&name) {
        return Err(ApiError::new(StatusCode::CONFLICT, "resource_already_exists", format!("index {name} already exists")));
    }
    table.insert(
        name.clone(),
        Arc::new(Served {
            index: Arc::new(index),
            settings,
            writer: tokio::sync::Mutex::new(()),
        }),
    );
    Ok(Json(json!({"acknowledged": true, "index": name, "created": true})).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct BulkParams {
    dedup: Option<bool>,
    #[serde(default)]
    refresh: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BulkAction {
    Index(ActionMeta),
    Create(ActionMeta),
}

#[derive(Debug, Default, Deserialize)]
struct ActionMeta {
    #[serde(rename = "_id", default)]
    id: Option<Value>,
}

fn action_id(action: BulkAction) -> Option<String> {
    let (BulkAction::Index(m) | BulkAction::Create(m)) = action;
    match m.id? {
        Value::Null => None,
        Value::String(s) => Some(s),
        other => Some(other.to_string()),
    }
}

fn item_error(id: Option<&str>, status: u16, reason: &str) -> Value {
    json!({"index": {"_id": id, "status": status, "error": reason}})
}

async fn bulk(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    Query(params): Query<BulkParams>,
    body: Bytes,
) -> ApiResult {
    let served = state.get(&name)?;
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_request("empty_body", "bulk body is empty"));
    }
    if body.last() != Some(&b'\n') {
        return Err(ApiError::bad_request("parse_exception", "bulk body must end with a newline"));
    }
    let started = Instant::now();
    let body_len = body.len() as u64;
    let mut lines = body
        .split(|b| *b == b'\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| !l.iter().all(u8::is_ascii_whitespace));
    let mut items: Vec<(Option<String>, Result<NewDocument, String>)> = Vec::new();
    while let Some((n, action_line)) = lines.next() {
        let action: BulkAction = serde_json::from_slice(action_line).map_err(|e| {
            ApiError::bad_request("unparseable_action", format!("line {n}: {e}"))
        })?;
        let id = action_id(action);
        let Some((m, source)) = lines.next() else {
            return Err(ApiError::bad_request("unparseable_action", format!("line {n}: action without a source line")));
        };
        let doc = parse_json_record(source, || format!("line {m}"))
            .map(|mut d| {
                if id.is_some() {
                    d.external_id = id.clone();
                }
                d
            })
            .map_err(|e| format!("{}: {}", e.location, e.message));
        items.push((id, doc));
    }
    let dedup = params.dedup.unwrap_or(served.settings.dedup);
    let _guard = served.writer.lock().await;
    let index = served.index.clone();
    let refresh = params.refresh;
    let out = blocking(move || -> Result<Vec<Value>, IndexError> {
        let analyzer = index.analyzer().clone();
        let analyzed: Vec<_> = items
            .into_par_iter()
            .map(|(id, doc)| (id, doc.map(|d| d.analyze(&analyzer))))
            .collect();
        let mut results = vec![Value::Null; analyzed.len()];
        let mut ok_slots = Vec::new();
        let mut ok_docs = Vec::new();
        let mut ids = Vec::with_capacity(analyzed.len());
        for (slot, (id, doc)) in analyzed.into_iter().enumerate() {
            match doc {
                Ok(d) => {
                    ok_slots.push(slot);
                    ok_docs.push(d);
                }
                Err(reason) => results[slot] = item_error(id.as_deref(), 400, &reason),
            }
            ids.push(id);
        }
        for (slot, outcome) in ok_slots.into_iter().zip(index.add_batch(ok_docs, dedup)) {
            let id = ids[slot].as_deref();
            results[slot] = match outcome {
                Ok(AddOutcome::Indexed(doc_id)) => {
                    json!({"index": {"_id": id, "doc_id": doc_id, "status": 201, "result": "created"}})
                }
                Ok(AddOutcome::SkippedDuplicate(of)) => {
                    json!({"index": {"_id": id, "duplicate_of": of, "status": 200, "result": "noop"}})
                }
                Err(e) => item_error(id, 500, &e.to_string()),
            };
        }
        index.record_ingest_run(started.elapsed().as_secs_f64(), body_len)?;
        if refresh {
            index.refresh()?;
        }
        Ok(results)
    })
    .await??;
    let errors = out.iter().any(|v| v["index"]["error"].is_string());
    Ok(Json(json!({
        "took": started.elapsed().as_millis() as u64,
        "errors": errors,
        "items": out,
    }))
    .into_response())
}

#[derive(Debug, Default, Deserialize)]
struct SearchBody {
    query: Option<Value>,
    from: Option<usize>,
    size: Option<usize>,
    sort: Option<Value>,
    #[serde(rename = "_source")]
    source: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
struct PageParams {
    from: Option<usize>,
    size: Option<usize>,
}

fn check_sort(sort: &Option<Value>) -> Result<(), ApiError> {
    let ok = match sort {
        None => true,
        Some(Value::String(s)) => s == "doc_id",
        Some(Value::Array(a)) => a.iter().all(|v| v == "doc_id" || *v == json!({"doc_id": "asc"})),
        Some(v) => *v == json!({"doc_id": "asc"}),
    };
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request("bad_sort", "only ascending doc_id sort is supported"))
    }
}

async fn search(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    Query(page): Query<PageParams>,
    body: Bytes,
) -> ApiResult {
    let served = state.get(&name)?;
    let req: SearchBody = parse_body(&body)?;
    check_sort(&req.sort)?;
    let ast = parse_query(req.query)?;
    let from = page.from.or(req.from).unwrap_or(0);
    let size = page.size.or(req.size).unwrap_or(10);
    let with_source = req.source.unwrap_or(true);
    let searcher = served.index.searcher();
    let body = blocking(move || -> Result<Value, QueryError> {
        let result = searcher.search_page(&ast, from, size)?;
        let snap = searcher.snapshot();
        let hits: Vec<Value> = result
            .hits
            .iter()
            .map(|h| {
                let mut hit = json!({
                    "_id": h.external_id,
                    "doc_id": h.doc_id,
                    "occurrence_count": h.occurrence_count,
                });
                if let (true, Some(d)) = (with_source, snap.doc(h.doc_id)) {
                    hit["_source"] = json!({
                        "id": d.external_id,
                        "text": d.text,
                        "source": d.metadata.source,
                        "language": d.metadata.language,
                        "url": d.metadata.url,
                    });
                }
                hit
            })
            .collect();
        Ok(json!({
            "took": result.took,
            "hits": {"total": result.total_docs, "hits": hits},
        }))
    })
    .await??;
    Ok(Json(body).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct CountBody {
    query: Option<Value>,
}

async fn count(
    State(state): State<Arc<AppState>>,
    UrlPath(name): UrlPath<String>,
    body: Bytes,
) -> ApiResult {
    let served = state.get(&name)?;
    let req: CountBody = parse_body(&body)?;
    let ast = parse_query(req.query)?;
    let searcher = served.index.searcher();
    let n = blocking(move || searcher.count(&ast)).await??;
    Ok(Json(json!({"count": n})).into_response())
}

async fn refresh(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> ApiResult {
    let served = state.get(&name)?;
    let _guard = served.writer.lock().await;
    let index = served.index.clone();
    let info = blocking(move || index.refresh()).await??;
    Ok(Json(json!({"acknowledged": true, "segment": info})).into_response())
}

async fn stats(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> ApiResult {
    let served = state.get(&name)?;
    Ok(Json(snapshot_stats(&served.index, &name)).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SourceSpec {
    Remote { remote_url: String },
    Local { index: String },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(SourceSpec),
    Many(Vec<SourceSpec>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DestSpec {
    Name(String),
    Object { index: String },
}

#[derive(Debug, Deserialize)]
struct ReindexBody {
    source: OneOrMany,
    dest: DestSpec,
    #[serde(default)]
    dedup: bool,
    #[serde(default)]
    append: bool,
}

async fn reindex(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: ReindexBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("parse_exception", e.to_string()))?;
    let (DestSpec::Name(dest_name) | DestSpec::Object { index: dest_name }) = req.dest;
    let dest = state.get(&dest_name)?;
    let specs = match req.source {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    };
    let mut sources = Vec::with_capacity(specs.len());
    for spec in specs {
        sources.push(match spec {
            SourceSpec::Remote { remote_url } => MergeSource::Remote(remote_url.trim_end_matches('/').to_owned()),
            SourceSpec::Local { index } => {
                if index == dest_name {
                    return Err(ApiError::bad_request("invalid_source", "source and destination are the same index"));
                }
                MergeSource::Open(state.get(&index)?.index.clone())
            }
        });
    }
    let options = MergeOptions {
        dedup: req.dedup,
        append: req.append,
        ..MergeOptions::default()
    };
    let _guard = dest.writer.lock().await;
    let index = dest.index.clone();
    let report = blocking(move || merge_indices(&sources, &index, &options)).await?;
    match report {
        Ok(r) => Ok(Json(r).into_response()),
        Err(ShardError::SourceUnreachable(src, why)) => Err(ApiError::new(
            StatusCode::BAD_GATEWAY,
            "source_unreachable",
            format!("{src}: {why}"),
        )),
        Err(ShardError::DestNotEmpty) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "dest_not_empty",
            "destination index is not empty; pass append=true to merge into it",
        )),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    let n = state.indices.read().expect("index table poisoned").len();
    Json(json!({"status": "green", "indices": n}))
}

fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/_health", get(health))
        .route("/_reindex", post(reindex))
        .route("/{index}", put(create_index))
        .route("/{index}/_bulk", post(bulk))
        .route("/{index}/_search", get(search).post(search))
        .route("/{index}/_count", get(count).post(count))
        .route("/{index}/_refresh", post(refresh))
        .route("/{index}/_stats", get(stats))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

/// A bound, not yet running server.
pub struct Server {
    listener: tokio::net::TcpListener,
    app: Router,
}

impl Server {
    /// Opens every index under `data_dir` (creating the directory if
    /// needed) and binds the listener.
    pub async fn bind(cfg: &ServerConfig) -> Result<Server, ServerError> {
        std::fs::create_dir_all(&cfg.data_dir)?;
        let indices = open_existing(&cfg.data_dir)?;
        let state = Arc::new(AppState {
            data_dir: cfg.data_dir.clone(),
            indices: RwLock::new(indices),
        });
        let addr = SocketAddr::new(cfg.bind, cfg.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServerError::Bind { addr, source })?;
        Ok(Server {
            listener,
            app: router(state, cfg.max_body_bytes),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        axum::serve(self.listener, self.app)
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// A server running on its own runtime thread; stops when dropped.
pub struct BackgroundServer {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl BackgroundServer {
    pub fn start(cfg: ServerConfig) -> Result<BackgroundServer, ServerError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()?;
        let server = runtime.block_on(Server::bind(&cfg))?;
        let addr = server.local_addr()?;
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(server.run(async {
                let _ = stopped.await;
            }))
        });
        Ok(BackgroundServer {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_names() {
        for ok in ["corpus", "a_b-1", "0"] {
            assert!(valid_index_name(ok), "{ok}");
        }
        for bad in ["", "Bad*Name", "UPPER", "_health", "a b", "é"] {
            assert!(!valid_index_name(bad), "{bad}");
        }
    }

    #[test]
    fn default_bind_is_loopback() {
        let cfg = ServerConfig::default();
        assert!(cfg.bind.is_loopback());
        assert_eq!(cfg.port, 9200);
    }

    #[test]
    fn sort_spec() {
        assert!(check_sort(&None).is_ok());
        assert!(check_sort(&Some(json!("doc_id"))).is_ok());
        assert!(check_sort(&Some(json!([{"doc_id": "asc"}]))).is_ok());
        assert!(check_sort(&Some(json!({"doc_id": "desc"}))).is_err());
    }
}
