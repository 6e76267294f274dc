//! Parallel bulk ingestion.
//!
//! One producer (the calling thread) groups input documents into chunks and
//! pushes them onto a bounded queue of `queue_size` chunks; `worker_count`
//! workers analyze each chunk and hand it to the index writer. A chunk slot
//! must be acquired before a chunk is started, and there are exactly
//! `queue_size + worker_count` slots, so the payload held by the pipeline
//! never exceeds `(queue_size + worker_count) × max_chunk_bytes`.

pub mod input;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, RecvTimeoutError};
use serde::{Deserialize, Serialize};

use crate::index::{AddOutcome, Index, IndexError, NewDocument};

pub use input::{
    parse_json_record, sample_avg_doc_size, InputFiles, InputFormat, InputUnreadable,
    JsonLinesReader, Record, RecordError,
};

/// Queue length used when none is given; inside the tested range 2..=8.
pub const DEFAULT_QUEUE_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefreshPolicy {
    /// Refresh once, after the last document.
    DisabledDuringBulk,
    EveryNSeconds(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkParams {
    pub worker_count: usize,
    /// Documents per chunk.
    pub chunk_size: usize,
    /// Payload cap per chunk.
    pub max_chunk_bytes: u64,
    /// Chunks buffered between the producer and the workers.
    pub queue_size: usize,
    pub refresh_policy: RefreshPolicy,
}

impl Default for BulkParams {
    fn default() -> Self {
        BulkParams {
            worker_count: available_cores().min(4),
            chunk_size: 500,
            max_chunk_bytes: 10 * 1024 * 1024,
            queue_size: DEFAULT_QUEUE_SIZE,
            refresh_policy: RefreshPolicy::DisabledDuringBulk,
        }
    }
}

impl BulkParams {
    pub fn validate(&self, cores: usize) -> Result<(), BulkError> {
        let bad = |m: String| Err(BulkError::InvalidParams(m));
        if self.worker_count == 0 || self.chunk_size == 0 || self.queue_size == 0 {
            return bad("worker_count, chunk_size and queue_size must be positive".into());
        }
        if self.max_chunk_bytes == 0 {
            return bad("max_chunk_bytes must be positive".into());
        }
        if self.worker_count > cores {
            return bad(format!(
                "worker_count {} exceeds the {cores} available cores",
                self.worker_count
            ));
        }
        if let RefreshPolicy::EveryNSeconds(n) = self.refresh_policy {
            if n.is_nan() || n <= 0.0 {
                return bad("refresh interval must be positive".into());
            }
        }
        Ok(())
    }

    /// Upper bound on payload bytes held by the pipeline at any instant.
    pub fn inflight_envelope(&self) -> u64 {
        (self.queue_size + self.worker_count) as u64 * self.max_chunk_bytes
    }
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, thiserror::Error)]
pub enum BulkError {
    #[error(transparent)]
    InputUnreadable(#[from] InputUnreadable),
    #[error("index is closed")]
    IndexClosed,
    #[error("index failure: {0}")]
    Index(IndexError),
    #[error("invalid bulk parameters: {0}")]
    InvalidParams(String),
    #[error("memory budget of {budget} bytes cannot hold even one {avg_doc_size}-byte document per chunk slot")]
    InfeasibleBudget { budget: u64, avg_doc_size: u64 },
}

impl From<IndexError> for BulkError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::IndexClosed => BulkError::IndexClosed,
            other => BulkError::Index(other),
        }
    }
}

/// Picks tunables from the average document size, the per-request payload
/// cap, the core count and a memory budget.
///
/// `chunk_size` is bounded by `max_chunk_bytes / avg_doc_size`; when the
/// budget cannot hold `queue_size + worker_count` full chunks, the per-chunk
/// payload (and with it `chunk_size`) shrinks, and failing that the worker
/// count drops.
pub fn plan_bulk_params(
    avg_doc_size: u64,
    max_chunk_bytes: u64,
    cores: usize,
    ram_budget: u64,
) -> Result<BulkParams, BulkError> {
    if avg_doc_size == 0 || max_chunk_bytes == 0 || cores == 0 || ram_budget == 0 {
        return Err(BulkError::InvalidParams("all planner inputs must be positive".into()));
    }
    if avg_doc_size > max_chunk_bytes {
        return Err(BulkError::InvalidParams(format!(
            "average document size {avg_doc_size} exceeds max_chunk_bytes {max_chunk_bytes}"
        )));
    }
    let queue_size = DEFAULT_QUEUE_SIZE;
    let mut worker_count = cores;
    loop {
        let slots = (queue_size + worker_count) as u64;
        let per_slot = max_chunk_bytes.min(ram_budget / slots);
        let chunk_size = per_slot / avg_doc_size;
        if chunk_size >= 1 {
            return Ok(BulkParams {
                worker_count,
                chunk_size: chunk_size.try_into().unwrap_or(usize::MAX),
                max_chunk_bytes: per_slot,
                queue_size,
                refresh_policy: RefreshPolicy::DisabledDuringBulk,
            });
        }
        if worker_count == 1 {
            return Err(BulkError::InfeasibleBudget {
                budget: ram_budget,
                avg_doc_size,
            });
        }
        worker_count -= 1;
    }
}

/// Insertion-speed ceiling when every document costs two sequential storage
/// round trips.
pub fn estimate_throughput_ceiling(storage_round_trip_latency_secs: f64) -> f64 {
    assert!(
        storage_round_trip_latency_secs > 0.0,
        "latency must be positive"
    );
    1.0 / (2.0 * storage_round_trip_latency_secs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocFailure {
    pub location: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BulkReport {
    pub docs_read: u64,
    pub docs_indexed: u64,
    pub docs_skipped_duplicate: u64,
    pub docs_failed: u64,
    pub failures: Vec<DocFailure>,
    /// Documents larger than `max_chunk_bytes`, each sent as its own chunk.
    pub oversized_docs: u64,
    pub chunks: u64,
    pub wall_seconds: f64,
    /// Documents indexed per second of wall time.
    pub indexing_rate: f64,
    pub peak_inflight_bytes: u64,
    pub peak_rss_estimate_bytes: Option<u64>,
    pub params: BulkParams,
}

impl BulkReport {
    pub fn duplicate_fraction(&self) -> f64 {
        if self.docs_read == 0 {
            0.0
        } else {
            self.docs_skipped_duplicate as f64 / self.docs_read as f64
        }
    }
}

#[derive(Clone, Default)]
pub struct BulkOptions {
    pub dedup: bool,
    /// Called with the new in-flight byte total after every increase.
    pub inflight_observer: Option<Arc<dyn Fn(u64) + Send + Sync>>,
    /// Accept more workers than available cores.
    pub oversubscribe: bool,
}

impl std::fmt::Debug for BulkOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BulkOptions")
            .field("dedup", &self.dedup)
            .field("inflight_observer", &self.inflight_observer.is_some())
            .field("oversubscribe", &self.oversubscribe)
            .finish()
    }
}

/// Bytes currently held in chunks, with the running peak.
#[derive(Default)]
struct InflightGauge {
    current: AtomicU64,
    peak: AtomicU64,
}

impl InflightGauge {
    fn add(&self, n: u64, observer: Option<&(dyn Fn(u64) + Send + Sync)>) {
        let now = self.current.fetch_add(n, Ordering::SeqCst) + n;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if let Some(obs) = observer {
            obs(now);
        }
    }

    fn sub(&self, n: u64) {
        self.current.fetch_sub(n, Ordering::SeqCst);
    }
}

struct Chunk {
    docs: Vec<(String, NewDocument)>,
    bytes: u64,
}

#[derive(Default)]
struct ChunkResult {
    indexed: u64,
    skipped: u64,
    failures: Vec<DocFailure>,
    fatal: Option<IndexError>,
}

/// Ingests documents read from files.
pub fn bulk_index_files(
    index: &Index,
    paths: Vec<PathBuf>,
    params: &BulkParams,
    options: &BulkOptions,
) -> Result<BulkReport, BulkError> {
    bulk_index(index, InputFiles::new(paths), params, options)
}

/// Ingests a stream of records. Record-level failures are reported and never
/// abort the run; unreadable input or a closed index does.
pub fn bulk_index<I>(
    index: &Index,
    input: I,
    params: &BulkParams,
    options: &BulkOptions,
) -> Result<BulkReport, BulkError>
where
    I: Iterator<Item = Result<Record, InputUnreadable>>,
{
    let cores = available_cores();
    if options.oversubscribe && params.worker_count > cores {
        log::warn!("running {} workers on {cores} cores", params.worker_count);
        params.validate(params.worker_count)?;
    } else {
        params.validate(cores)?;
    }
    let started = Instant::now();
    let gauge = InflightGauge::default();
    let stop = AtomicBool::new(false);
    let slot_count = params.queue_size + params.worker_count;
    let (slot_tx, slot_rx) = bounded::<()>(slot_count);
    for _ in 0..slot_count {
        slot_tx.send(()).expect("slot channel sized for all slots");
    }
    let (chunk_tx, chunk_rx) = bounded::<Chunk>(params.queue_size);
    let (result_tx, result_rx) = unbounded::<ChunkResult>();
    let observer = options.inflight_observer.as_deref();
    let dedup = options.dedup;

    let mut docs_read = 0u64;
    let mut oversized = 0u64;
    let mut chunks = 0u64;
    let mut read_failures: Vec<DocFailure> = Vec::new();
    let mut input_error: Option<InputUnreadable> = None;

    let (indexed, skipped, mut failures, fatal, refresh_error) = std::thread::scope(|scope| {
        for _ in 0..params.worker_count {
            let chunk_rx = chunk_rx.clone();
            let slot_tx = slot_tx.clone();
            let result_tx = result_tx.clone();
            let (gauge, stop) = (&gauge, &stop);
            scope.spawn(move || {
                for chunk in chunk_rx.iter() {
                    let result = process_chunk(index, chunk.docs, dedup);
                    gauge.sub(chunk.bytes);
                    let _ = slot_tx.send(());
                    if result.fatal.is_some() {
                        stop.store(true, Ordering::SeqCst);
                    }
                    if result_tx.send(result).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);

        let aggregator = scope.spawn(|| {
            let mut indexed = 0u64;
            let mut skipped = 0u64;
            let mut failures = Vec::new();
            let mut fatal = None;
            let mut refresh_error = None;
            let mut last_refresh = Instant::now();
            let interval = match params.refresh_policy {
                RefreshPolicy::EveryNSeconds(n) => Some(Duration::from_secs_f64(n)),
                RefreshPolicy::DisabledDuringBulk => None,
            };
            loop {
                let wait = interval
                    .map(|i| i.saturating_sub(last_refresh.elapsed()))
                    .unwrap_or(Duration::from_secs(3600));
                match result_rx.recv_timeout(wait) {
                    Ok(r) => {
                        indexed += r.indexed;
                        skipped += r.skipped;
                        failures.extend(r.failures);
                        if fatal.is_none() {
                            fatal = r.fatal;
                        }
                    }
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => break,
                }
                if let Some(i) = interval {
                    if last_refresh.elapsed() >= i {
                        if let Err(e) = index.refresh() {
                            refresh_error.get_or_insert(e);
                        }
                        last_refresh = Instant::now();
                    }
                }
            }
            (indexed, skipped, failures, fatal, refresh_error)
        });

        // Producer.
        let mut current: Option<Chunk> = None;
        let max_docs = params.chunk_size;
        let max_bytes = params.max_chunk_bytes;
        for item in input {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let record = match item {
                Ok(r) => r,
                Err(e) => {
                    input_error = Some(e);
                    break;
                }
            };
            docs_read += 1;
            let doc = match record {
                Ok(d) => d,
                Err(e) => {
                    read_failures.push(DocFailure {
                        location: e.location,
                        error: e.message,
                    });
                    continue;
                }
            };
            let size = doc.text.len() as u64;
            let fits = current
                .as_ref()
                .is_some_and(|c| c.docs.len() < max_docs && c.bytes + size <= max_bytes);
            if !fits {
                if let Some(full) = current.take() {
                    chunks += 1;
                    if chunk_tx.send(full).is_err() {
                        break;
                    }
                }
                if slot_rx.recv().is_err() {
                    break;
                }
                current = Some(Chunk {
                    docs: Vec::with_capacity(max_docs.min(4096)),
                    bytes: 0,
                });
            }
            if size > max_bytes {
                oversized += 1;
            }
            let chunk = current.as_mut().expect("chunk started above");
            gauge.add(size, observer);
            chunk.bytes += size;
            let location = doc
                .external_id
                .clone()
                .unwrap_or_else(|| format!("record {docs_read}"));
            chunk.docs.push((location, doc));
        }
        if let Some(last) = current.take() {
            chunks += 1;
            let _ = chunk_tx.send(last);
        }
        drop(chunk_tx);
        aggregator.join().expect("aggregator thread panicked")
    });

    if let Some(e) = input_error {
        return Err(e.into());
    }
    if let Some(e) = fatal {
        return Err(e.into());
    }
    if let Some(e) = refresh_error {
        return Err(e.into());
    }
    index.refresh()?;

    read_failures.append(&mut failures);
    let wall_seconds = started.elapsed().as_secs_f64();
    let peak = gauge.peak.load(Ordering::SeqCst);
    index.record_ingest_run(wall_seconds, peak)?;
    let docs_failed = read_failures.len() as u64;
    debug_assert_eq!(indexed + skipped + docs_failed, docs_read);
    Ok(BulkReport {
        docs_read,
        docs_indexed: indexed,
        docs_skipped_duplicate: skipped,
        docs_failed,
        failures: read_failures,
        oversized_docs: oversized,
        chunks,
        wall_seconds,
        indexing_rate: if wall_seconds > 0.0 {
            indexed as f64 / wall_seconds
        } else {
            0.0
        },
        peak_inflight_bytes: peak,
        peak_rss_estimate_bytes: peak_rss_bytes(),
        params: params.clone(),
    })
}

fn process_chunk(index: &Index, docs: Vec<(String, NewDocument)>, dedup: bool) -> ChunkResult {
    let (locations, analyzed): (Vec<String>, Vec<_>) = docs
        .into_iter()
        .map(|(loc, d)| (loc, d.analyze(index.analyzer())))
        .unzip();
    let mut result = ChunkResult::default();
    for (location, outcome) in locations.into_iter().zip(index.add_batch(analyzed, dedup)) {
        match outcome {
            Ok(AddOutcome::Indexed(_)) => result.indexed += 1,
            Ok(AddOutcome::SkippedDuplicate(_)) => result.skipped += 1,
            Err(IndexError::IndexClosed) => {
                result.fatal.get_or_insert(IndexError::IndexClosed);
                result.failures.push(DocFailure {
                    location,
                    error: IndexError::IndexClosed.to_string(),
                });
            }
            Err(e) => result.failures.push(DocFailure {
                location,
                error: e.to_string(),
            }),
        }
    }
    result
}

/// Peak resident set size of this process, where the OS exposes it.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
