//! C ABI for corpusdex.
//!
//! Every function returns a [`CdxStatus`]; on failure a message is available
//! from [`cdx_last_error_message`] on the same thread. Indices are opaque
//! handles released with [`cdx_index_free`]; strings returned by this
//! library are released with [`cdx_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use corpusdex::analysis::AnalyzerConfig;
use corpusdex::bulk::{estimate_throughput_ceiling, plan_bulk_params, BulkError};
use corpusdex::index::{AddOutcome, Index, IndexError, NewDocument};
use corpusdex::query::{QueryAst, QueryError};
use corpusdex::shard::route;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdxStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidQuery = 3,
    NotFound = 4,
    AlreadyExists = 5,
    Io = 6,
    Corrupt = 7,
    InvalidParams = 8,
    IndexClosed = 9,
    StorageFull = 10,
    Panic = 99,
}

/// An open index.
pub struct CdxIndex {
    inner: Index,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CdxBulkParams {
    pub worker_count: usize,
    pub chunk_size: usize,
    pub max_chunk_bytes: u64,
    pub queue_size: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CdxStatus, String);

impl From<IndexError> for Failure {
    fn from(e: IndexError) -> Self {
        let status = match &e {
            IndexError::IndexClosed => CdxStatus::IndexClosed,
            IndexError::InvalidUtf8 { .. } => CdxStatus::InvalidUtf8,
            IndexError::StorageFull => CdxStatus::StorageFull,
            IndexError::IoFailure(_) => CdxStatus::Io,
            IndexError::BadMagic | IndexError::UnsupportedVersion(_) | IndexError::Corrupt(_) => CdxStatus::Corrupt,
            IndexError::NotFound(_) => CdxStatus::NotFound,
            IndexError::AlreadyExists(_) => CdxStatus::AlreadyExists,
        };
        Failure(status, e.to_string())
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        Failure(CdxStatus::InvalidQuery, e.to_string())
    }
}

impl From<BulkError> for Failure {
    fn from(e: BulkError) -> Self {
        Failure(CdxStatus::InvalidParams, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CdxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CdxStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            CdxStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(CdxStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(CdxStatus::InvalidUtf8, format!("{name}: invalid UTF-8 at byte {}", e.valid_up_to())))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn index_arg<'a>(p: *const CdxIndex) -> Result<&'a Index, Failure> {
    p.as_ref()
        .map(|h| &h.inner)
        .ok_or_else(|| Failure(CdxStatus::NullArgument, "index handle is null".into()))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(CdxStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

fn into_handle(index: Index) -> *mut CdxIndex {
    Box::into_raw(Box::new(CdxIndex { inner: index }))
}

/// Creates an empty on-disk index with the default analyzer.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_create(path: *const c_char, out: *mut *mut CdxIndex) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let index = Index::create(str_arg(path, "path")?, AnalyzerConfig::default())?;
        *out = into_handle(index);
        Ok(())
    })
}

/// Opens an existing on-disk index.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_open(path: *const c_char, out: *mut *mut CdxIndex) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let index = Index::open(str_arg(path, "path")?)?;
        *out = into_handle(index);
        Ok(())
    })
}

/// Creates an index held in memory only.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_in_memory(out: *mut *mut CdxIndex) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = into_handle(Index::in_memory(AnalyzerConfig::default()));
        Ok(())
    })
}

/// Adds one document. `external_id` and `language` may be null. On success
/// `out_doc_id` receives the new id, or the id of the earlier identical
/// document when `dedup` is set and `out_skipped` is set to true.
///
/// # Safety
/// Pointers must be valid; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_add(
    index: *const CdxIndex,
    text: *const c_char,
    external_id: *const c_char,
    language: *const c_char,
    dedup: bool,
    out_doc_id: *mut u64,
    out_skipped: *mut bool,
) -> CdxStatus {
    guard(|| {
        let index = index_arg(index)?;
        let mut doc = NewDocument::new(str_arg(text, "text")?);
        if let Some(id) = opt_str_arg(external_id, "external_id")? {
            doc = doc.with_id(id);
        }
        if let Some(lang) = opt_str_arg(language, "language")? {
            doc = doc.with_language(lang);
        }
        let (id, skipped) = match index.add_document(doc, dedup)? {
            AddOutcome::Indexed(id) => (id, false),
            AddOutcome::SkippedDuplicate(id) => (id, true),
        };
        if !out_doc_id.is_null() {
            *out_doc_id = id;
        }
        if !out_skipped.is_null() {
            *out_skipped = skipped;
        }
        Ok(())
    })
}

/// Makes every added document searchable.
///
/// # Safety
/// `index` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_refresh(index: *const CdxIndex) -> CdxStatus {
    guard(|| {
        index_arg(index)?.refresh()?;
        Ok(())
    })
}

/// Number of searchable documents.
///
/// # Safety
/// `index` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_doc_count(index: *const CdxIndex, out: *mut u64) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = index_arg(index)?.snapshot().doc_count();
        Ok(())
    })
}

/// Flushes pending documents and closes the index, then frees the handle.
/// Null is ignored.
///
/// # Safety
/// `index` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdx_index_free(index: *mut CdxIndex) {
    if index.is_null() {
        return;
    }
    let handle = Box::from_raw(index);
    if let Err(e) = handle.inner.close() {
        set_last_error(&e.to_string());
    }
}

fn parse_query(json: &str) -> Result<QueryAst, Failure> {
    let v: serde_json::Value =
        serde_json::from_str(json).map_err(|e| Failure(CdxStatus::InvalidQuery, e.to_string()))?;
    QueryAst::from_json(&v).map_err(|e| Failure(CdxStatus::InvalidQuery, e.to_string()))
}

/// Number of documents matching a JSON query such as
/// `{"match_phrase": {"query": "climate change", "slop": 1}}`.
///
/// # Safety
/// `index` must be a live handle, `query_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_count_json(index: *const CdxIndex, query_json: *const c_char, out: *mut u64) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ast = parse_query(str_arg(query_json, "query_json")?)?;
        *out = index_arg(index)?.searcher().count(&ast)?;
        Ok(())
    })
}

/// Matching documents as a JSON string `{"total": n, "hits": [...]}`, to be
/// released with [`cdx_string_free`].
///
/// # Safety
/// `index` must be a live handle, `query_json` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_search_json(
    index: *const CdxIndex,
    query_json: *const c_char,
    limit: usize,
    out: *mut *mut c_char,
) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ast = parse_query(str_arg(query_json, "query_json")?)?;
        let result = index_arg(index)?.searcher().search(&ast, limit)?;
        let body = serde_json::json!({"total": result.total_docs, "hits": result.hits}).to_string();
        *out = CString::new(body).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// Documents containing `phrase` with at most `slop` intervening tokens.
///
/// # Safety
/// `index` must be a live handle, `phrase` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_phrase_count(
    index: *const CdxIndex,
    phrase: *const c_char,
    slop: u32,
    out: *mut u64,
) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ast = QueryAst::phrase(str_arg(phrase, "phrase")?, slop);
        *out = index_arg(index)?.searcher().count(&ast)?;
        Ok(())
    })
}

/// Total phrase occurrences (distinct match start positions) over all
/// documents.
///
/// # Safety
/// `index` must be a live handle, `phrase` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_phrase_occurrences(
    index: *const CdxIndex,
    phrase: *const c_char,
    slop: u32,
    out: *mut u64,
) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let ast = QueryAst::phrase(str_arg(phrase, "phrase")?, slop);
        *out = index_arg(index)?.searcher().occurrence_count(&ast, None)?;
        Ok(())
    })
}

/// Shard ordinal of a routing key.
///
/// # Safety
/// `key` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_route(key: *const c_char, n_shards: usize, out: *mut usize) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        if n_shards == 0 {
            return Err(Failure(CdxStatus::InvalidParams, "n_shards must be positive".into()));
        }
        *out = route(str_arg(key, "key")?, n_shards);
        Ok(())
    })
}

/// Documents per second achievable when each costs two storage round trips
/// of `latency_secs`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_throughput_ceiling(latency_secs: f64, out: *mut f64) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        if latency_secs.is_nan() || latency_secs <= 0.0 {
            return Err(Failure(CdxStatus::InvalidParams, "latency must be positive".into()));
        }
        *out = estimate_throughput_ceiling(latency_secs);
        Ok(())
    })
}

/// Plans bulk ingestion tunables.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdx_plan_bulk_params(
    avg_doc_size: u64,
    max_chunk_bytes: u64,
    cores: usize,
    ram_budget: u64,
    out: *mut CdxBulkParams,
) -> CdxStatus {
    guard(|| {
        out_arg(out, "out")?;
        let p = plan_bulk_params(avg_doc_size, max_chunk_bytes, cores, ram_budget)?;
        *out = CdxBulkParams {
            worker_count: p.worker_count,
            chunk_size: p.chunk_size,
            max_chunk_bytes: p.max_chunk_bytes,
            queue_size: p.queue_size,
        };
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Release with
/// [`cdx_string_free`].
#[no_mangle]
pub extern "C" fn cdx_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |m| m.clone().into_raw()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
