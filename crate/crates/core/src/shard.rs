//! Hash-routed shards, scatter-gather counting and index merging.
//!
//! Merging re-feeds every stored document of the sources through the
//! destination's analyzer and writer; postings are never copied.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::bounded;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::AnalyzerConfig;
use crate::bulk::{
    available_cores, bulk_index, BulkError, BulkOptions, BulkParams, BulkReport, DocFailure,
    InputUnreadable, Record, RefreshPolicy,
};
use crate::index::{Index, IndexError, KeywordField, Metadata, NewDocument};
use crate::query::{QueryAst, QueryError, Searcher};

/// Documents fetched per request when draining a remote index.
pub const DEFAULT_PAGE_SIZE: usize = 1_000;

const SHARDS_FILE: &str = "shards.json";

#[derive(Debug, thiserror::Error)]
pub enum ShardError {
    #[error("shard {0} is unavailable")]
    ShardUnavailable(usize),
    #[error("source {0} is unreachable: {1}")]
    SourceUnreachable(String, String),
    #[error("destination index is not empty (use append to merge into it)")]
    DestNotEmpty,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Bulk(#[from] BulkError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Shard ordinal for `key`: the first eight bytes of its SHA-256 digest,
/// read big-endian, modulo `n_shards`.
pub fn route(routing_key: &str, n_shards: usize) -> usize {
    assert!(n_shards >= 1, "need at least one shard");
    let digest = Sha256::digest(routing_key.as_bytes());
    let head = u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
    (head % n_shards as u64) as usize
}

/// Routing key of a document: its external id, or the hex content hash for
/// documents without one.
pub fn routing_key(doc: &NewDocument) -> String {
    doc.external_id
        .clone()
        .unwrap_or_else(|| hex::encode(crate::index::content_hash(&doc.text)))
}

#[derive(Debug, Serialize, Deserialize)]
struct ShardsMeta {
    n_shards: usize,
    routing_seed: u64,
}

/// A fixed number of independent indices with deterministic routing.
#[derive(Debug)]
pub struct ShardSet {
    shards: Vec<Result<Arc<Index>, String>>,
    routing_seed: u64,
}

impl ShardSet {
    pub fn in_memory(n_shards: usize, config: AnalyzerConfig) -> ShardSet {
        assert!(n_shards >= 1, "need at least one shard");
        ShardSet {
            shards: (0..n_shards)
                .map(|_| Ok(Arc::new(Index::in_memory(config.clone()))))
                .collect(),
            routing_seed: 0,
        }
    }

    pub fn create(root: &Path, n_shards: usize, config: AnalyzerConfig) -> Result<ShardSet, ShardError> {
        assert!(n_shards >= 1, "need at least one shard");
        std::fs::create_dir_all(root).map_err(IndexError::from)?;
        let meta = ShardsMeta {
            n_shards,
            routing_seed: 0,
        };
        std::fs::write(
            root.join(SHARDS_FILE),
            serde_json::to_vec_pretty(&meta).expect("shards meta serializes"),
        )
        .map_err(IndexError::from)?;
        let mut shards = Vec::with_capacity(n_shards);
        for i in 0..n_shards {
            shards.push(Ok(Arc::new(Index::create(shard_dir(root, i), config.clone())?)));
        }
        Ok(ShardSet {
            shards,
            routing_seed: 0,
        })
    }

    /// Opens a shard set; shards that fail to open are reported as
    /// unavailable when used.
    pub fn open(root: &Path) -> Result<ShardSet, ShardError> {
        let bytes = std::fs::read(root.join(SHARDS_FILE)).map_err(IndexError::from)?;
        let meta: ShardsMeta = serde_json::from_slice(&bytes)
            .map_err(|e| IndexError::Corrupt(format!("{SHARDS_FILE}: {e}")))?;
        let shards = (0..meta.n_shards)
            .map(|i| {
                Index::open(shard_dir(root, i))
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .collect();
        Ok(ShardSet {
            shards,
            routing_seed: meta.routing_seed,
        })
    }

    pub fn from_indices(indices: Vec<Arc<Index>>) -> ShardSet {
        ShardSet {
            shards: indices.into_iter().map(Ok).collect(),
            routing_seed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }

    pub fn shard(&self, i: usize) -> Result<&Arc<Index>, ShardError> {
        self.shards
            .get(i)
            .and_then(|s| s.as_ref().ok())
            .ok_or(ShardError::ShardUnavailable(i))
    }

    pub fn shard_for(&self, doc: &NewDocument) -> usize {
        let key = routing_key(doc);
        if self.routing_seed == 0 {
            route(&key, self.len())
        } else {
            route(&format!("{}:{key}", self.routing_seed), self.len())
        }
    }

    pub fn add_document(&self, doc: NewDocument, dedup: bool) -> Result<usize, ShardError> {
        let i = self.shard_for(&doc);
        self.shard(i)?.add_document(doc, dedup)?;
        Ok(i)
    }

    pub fn refresh(&self) -> Result<(), ShardError> {
        for i in 0..self.len() {
            self.shard(i)?.refresh()?;
        }
        Ok(())
    }

    /// Routes a document stream to the shards and ingests all shards in
    /// parallel, splitting the worker budget between them.
    pub fn bulk_index<I>(
        &self,
        input: I,
        params: &BulkParams,
        options: &BulkOptions,
    ) -> Result<BulkReport, ShardError>
    where
        I: Iterator<Item = Result<Record, InputUnreadable>>,
    {
        let shards: Vec<&Arc<Index>> = (0..self.len())
            .map(|i| self.shard(i))
            .collect::<Result<_, _>>()?;
        let per_shard = BulkParams {
            worker_count: (params.worker_count / self.len()).max(1),
            ..params.clone()
        };
        let started = Instant::now();
        let mut input_error = None;
        let mut routing_failures = Vec::new();
        let reports = std::thread::scope(|scope| {
            let mut senders = Vec::with_capacity(shards.len());
            let mut handles = Vec::with_capacity(shards.len());
            for index in &shards {
                let (tx, rx) = bounded::<Result<Record, InputUnreadable>>(1024);
                senders.push(tx);
                let per_shard = &per_shard;
                handles.push(scope.spawn(move || bulk_index(index, rx.into_iter(), per_shard, options)));
            }
            for item in input {
                match item {
                    Ok(Ok(doc)) => {
                        let i = self.shard_for(&doc);
                        if senders[i].send(Ok(Ok(doc))).is_err() {
                            break;
                        }
                    }
                    Ok(Err(e)) => routing_failures.push(DocFailure {
                        location: e.location,
                        error: e.message,
                    }),
                    Err(e) => {
                        input_error = Some(e);
                        break;
                    }
                }
            }
            drop(senders);
            handles
                .into_iter()
                .map(|h| h.join().expect("shard ingest thread panicked"))
                .collect::<Vec<_>>()
        });
        if let Some(e) = input_error {
            return Err(BulkError::from(e).into());
        }
        let mut merged: Option<BulkReport> = None;
        for r in reports {
            let r = r?;
            merged = Some(match merged {
                None => r,
                Some(mut m) => {
                    m.docs_read += r.docs_read;
                    m.docs_indexed += r.docs_indexed;
                    m.docs_skipped_duplicate += r.docs_skipped_duplicate;
                    m.docs_failed += r.docs_failed;
                    m.failures.extend(r.failures);
                    m.oversized_docs += r.oversized_docs;
                    m.chunks += r.chunks;
                    m.peak_inflight_bytes += r.peak_inflight_bytes;
                    m
                }
            });
        }
        let mut report = merged.expect("at least one shard");
        report.docs_read += routing_failures.len() as u64;
        report.docs_failed += routing_failures.len() as u64;
        report.failures.extend(routing_failures);
        report.wall_seconds = started.elapsed().as_secs_f64();
        report.indexing_rate = report.docs_indexed as f64 / report.wall_seconds.max(f64::MIN_POSITIVE);
        report.params = params.clone();
        Ok(report)
    }

    /// Searchers over every shard's last refreshed snapshot.
    pub fn searcher(&self) -> Result<ShardedSearcher, ShardError> {
        let searchers = (0..self.len())
            .map(|i| self.shard(i).map(|s| s.searcher()))
            .collect::<Result<_, _>>()?;
        Ok(ShardedSearcher { searchers })
    }

    /// Sum of per-shard document counts for `ast`.
    pub fn scatter_gather_count(&self, ast: &QueryAst) -> Result<u64, ShardError> {
        if self.is_empty() {
            log::warn!("scatter-gather count over an empty shard set");
            return Ok(0);
        }
        Ok(self.searcher()?.count(ast)?)
    }
}

fn shard_dir(root: &Path, i: usize) -> PathBuf {
    root.join(format!("shard_{i:03}"))
}

/// Whether `root` holds a shard set rather than a single index.
pub fn is_shard_root(root: &Path) -> bool {
    root.join(SHARDS_FILE).is_file()
}

/// Index directories of the shard set at `root`.
pub fn shard_dirs(root: &Path) -> Result<Vec<PathBuf>, ShardError> {
    let bytes = std::fs::read(root.join(SHARDS_FILE)).map_err(IndexError::from)?;
    let meta: ShardsMeta = serde_json::from_slice(&bytes)
        .map_err(|e| IndexError::Corrupt(format!("{SHARDS_FILE}: {e}")))?;
    Ok((0..meta.n_shards).map(|i| shard_dir(root, i)).collect())
}

/// Count-style queries, answered by a single index or by a set of shards.
pub trait CountSource: Sync {
    fn count(&self, ast: &QueryAst) -> Result<u64, QueryError>;
    fn occurrence_count(&self, ast: &QueryAst, within: Option<&QueryAst>) -> Result<u64, QueryError>;
    /// Distinct values of the `language` metadata field.
    fn languages(&self) -> Vec<String>;
    fn doc_count(&self) -> u64;
}

impl CountSource for Searcher {
    fn count(&self, ast: &QueryAst) -> Result<u64, QueryError> {
        Searcher::count(self, ast)
    }

    fn occurrence_count(&self, ast: &QueryAst, within: Option<&QueryAst>) -> Result<u64, QueryError> {
        Searcher::occurrence_count(self, ast, within)
    }

    fn languages(&self) -> Vec<String> {
        self.snapshot().keyword_values(KeywordField::Language)
    }

    fn doc_count(&self) -> u64 {
        Searcher::doc_count(self)
    }
}

/// Scatter-gather over per-shard searchers. Every document lives in exactly
/// one shard, so counts add up.
#[derive(Debug, Clone)]
pub struct ShardedSearcher {
    searchers: Vec<Searcher>,
}

impl ShardedSearcher {
    pub fn new(searchers: Vec<Searcher>) -> Self {
        ShardedSearcher { searchers }
    }

    pub fn searchers(&self) -> &[Searcher] {
        &self.searchers
    }

    fn gather(&self, f: impl Fn(&Searcher) -> Result<u64, QueryError> + Sync) -> Result<u64, QueryError> {
        let parts: Vec<Result<u64, QueryError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .searchers
                .iter()
                .map(|s| {
                    let f = &f;
                    scope.spawn(move || f(s))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("shard query thread panicked"))
                .collect()
        });
        parts.into_iter().sum()
    }
}

impl CountSource for ShardedSearcher {
    fn count(&self, ast: &QueryAst) -> Result<u64, QueryError> {
        self.gather(|s| s.count(ast))
    }

    fn occurrence_count(&self, ast: &QueryAst, within: Option<&QueryAst>) -> Result<u64, QueryError> {
        self.gather(|s| s.occurrence_count(ast, within))
    }

    fn languages(&self) -> Vec<String> {
        let mut all: Vec<String> = self.searchers.iter().flat_map(CountSource::languages).collect();
        all.sort();
        all.dedup();
        all
    }

    fn doc_count(&self) -> u64 {
        self.searchers.iter().map(Searcher::doc_count).sum()
    }
}

/// Where a merge reads documents from.
#[derive(Debug, Clone)]
pub enum MergeSource {
    /// An index directory on this machine.
    Local(PathBuf),
    /// `http://host:port/{index}` served by this crate's HTTP server.
    Remote(String),
    /// An index already open in this process.
    Open(Arc<Index>),
}

impl MergeSource {
    /// `http://` and `https://` addresses are remote, anything else a path.
    pub fn parse(s: &str) -> MergeSource {
        if s.starts_with("http://") || s.starts_with("https://") {
            MergeSource::Remote(s.trim_end_matches('/').to_owned())
        } else {
            MergeSource::Local(PathBuf::from(s))
        }
    }

    fn label(&self) -> String {
        match self {
            MergeSource::Local(p) => p.display().to_string(),
            MergeSource::Remote(u) => u.clone(),
            MergeSource::Open(i) => i
                .dir()
                .map(|d| d.display().to_string())
                .unwrap_or_else(|| "<memory>".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MergeOptions {
    pub dedup: bool,
    /// Allow merging into a destination that already holds documents.
    pub append: bool,
    pub page_size: usize,
    pub params: BulkParams,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions {
            dedup: false,
            append: false,
            page_size: DEFAULT_PAGE_SIZE,
            params: BulkParams {
                worker_count: available_cores().min(4),
                refresh_policy: RefreshPolicy::DisabledDuringBulk,
                ..BulkParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub sources: usize,
    pub docs_copied: u64,
    pub docs_skipped_duplicate: u64,
    pub docs_failed: u64,
    pub failures: Vec<DocFailure>,
    pub wall_seconds: f64,
}

/// Copies every document of `sources` into `dest`, re-analyzing it with the
/// destination's analyzer. One reader thread runs per source.
pub fn merge_indices(
    sources: &[MergeSource],
    dest: &Index,
    options: &MergeOptions,
) -> Result<MergeReport, ShardError> {
    if !options.append && (dest.snapshot().doc_count() > 0 || dest.pending_docs() > 0) {
        return Err(ShardError::DestNotEmpty);
    }
    let started = Instant::now();
    if sources.is_empty() {
        return Ok(MergeReport {
            sources: 0,
            docs_copied: 0,
            docs_skipped_duplicate: 0,
            docs_failed: 0,
            failures: Vec::new(),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let (tx, rx) = bounded::<Result<Record, InputUnreadable>>(options.page_size.max(1) * 2);
    let (report, source_errors) = std::thread::scope(|scope| {
        let readers: Vec<_> = sources
            .iter()
            .map(|src| {
                let tx = tx.clone();
                scope.spawn(move || drain_source(src, options.page_size, &tx))
            })
            .collect();
        drop(tx);
        let bulk_options = BulkOptions {
            dedup: options.dedup,
            ..BulkOptions::default()
        };
        let report = bulk_index(dest, rx.into_iter(), &options.params, &bulk_options);
        let errors: Vec<ShardError> = readers
            .into_iter()
            .filter_map(|h| h.join().expect("merge reader panicked").err())
            .collect();
        (report, errors)
    });
    if let Some(e) = source_errors.into_iter().next() {
        return Err(e);
    }
    let report = report?;
    Ok(MergeReport {
        sources: sources.len(),
        docs_copied: report.docs_indexed,
        docs_skipped_duplicate: report.docs_skipped_duplicate,
        docs_failed: report.docs_failed,
        failures: report.failures,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

type Sink = crossbeam_channel::Sender<Result<Record, InputUnreadable>>;

fn drain_source(src: &MergeSource, page_size: usize, tx: &Sink) -> Result<(), ShardError> {
    let send_all = |index: &Index| {
        for d in index.snapshot().documents() {
            let doc = NewDocument {
                external_id: d.external_id.clone(),
                text: d.text.clone(),
                metadata: d.metadata.clone(),
            };
            if tx.send(Ok(Ok(doc))).is_err() {
                break;
            }
        }
    };
    match src {
        MergeSource::Local(path) => {
            let index = Index::open(path).map_err(|e| {
                ShardError::SourceUnreachable(src.label(), e.to_string())
            })?;
            send_all(&index);
            Ok(())
        }
        MergeSource::Open(index) => {
            send_all(index);
            Ok(())
        }
        MergeSource::Remote(url) => drain_remote(url, page_size, tx),
    }
}

#[derive(Deserialize)]
struct RemoteSource {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(flatten)]
    metadata: Metadata,
}

#[derive(Deserialize)]
struct RemoteHit {
    #[serde(rename = "_source")]
    source: RemoteSource,
}

#[derive(Deserialize)]
struct RemoteHits {
    total: u64,
    hits: Vec<RemoteHit>,
}

#[derive(Deserialize)]
struct RemoteSearch {
    hits: RemoteHits,
}

/// Pages through `GET {url}/_search` with a doc id sort until exhausted.
fn drain_remote(url: &str, page_size: usize, tx: &Sink) -> Result<(), ShardError> {
    let unreachable = |e: String| ShardError::SourceUnreachable(url.to_owned(), e);
    let client = reqwest::blocking::Client::builder()
        .no_proxy()
        .timeout(Duration::from_secs(300))
        .build()
        .map_err(|e| unreachable(e.to_string()))?;
    let page_size = page_size.max(1);
    let mut from = 0usize;
    loop {
        let body = json!({
            "query": {"match_all": {}},
            "from": from,
            "size": page_size,
            "sort": "doc_id",
            "_source": true,
        });
        let resp = client
            .get(format!("{url}/_search"))
            .json(&body)
            .send()
            .map_err(|e| unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unreachable(format!("HTTP {}", resp.status())));
        }
        let page: RemoteSearch = resp.json().map_err(|e| unreachable(e.to_string()))?;
        let n = page.hits.hits.len();
        for hit in page.hits.hits {
            let doc = NewDocument {
                external_id: hit.source.id,
                text: hit.source.text,
                metadata: hit.source.metadata,
            };
            if tx.send(Ok(Ok(doc))).is_err() {
                return Ok(());
            }
        }
        from += n;
        if n == 0 || from as u64 >= page.hits.total {
            return Ok(());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_shard_and_determinism() {
        for key in ["a", "b", "", "ключ"] {
            assert_eq!(route(key, 1), 0);
            assert_eq!(route(key, 7), route(key, 7));
        }
        // First 8 bytes of SHA-256("abc") = ba7816bf8f01cfea.
        assert_eq!(route("abc", 1_000), (0xba7816bf8f01cfea_u64 % 1_000) as usize);
    }

    #[test]
    fn distribution_over_four_shards() {
        let mut counts = [0usize; 4];
        for i in 0..10_000 {
            counts[route(&format!("key-{i}"), 4)] += 1;
        }
        for c in counts {
            assert!((1_500..=3_500).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn counts_add_across_shards() {
        let a = Index::in_memory(AnalyzerConfig::default());
        let b = Index::in_memory(AnalyzerConfig::default());
        for i in 0..3 {
            a.add_document(NewDocument::new(format!("q {i}")), false).unwrap();
        }
        for i in 0..5 {
            b.add_document(NewDocument::new(format!("q {i}")), false).unwrap();
        }
        let set = ShardSet::from_indices(vec![Arc::new(a), Arc::new(b)]);
        set.refresh().unwrap();
        assert_eq!(set.scatter_gather_count(&QueryAst::matches("q")).unwrap(), 8);
        assert_eq!(ShardSet::from_indices(vec![]).scatter_gather_count(&QueryAst::matches("q")).unwrap(), 0);
    }

    #[test]
    fn unavailable_shard() {
        let dir = tempfile::tempdir().unwrap();
        ShardSet::create(dir.path(), 2, AnalyzerConfig::default()).unwrap();
        std::fs::remove_file(dir.path().join("shard_001/meta.json")).unwrap();
        let set = ShardSet::open(dir.path()).unwrap();
        assert!(matches!(
            set.scatter_gather_count(&QueryAst::match_all()),
            Err(ShardError::ShardUnavailable(1))
        ));
    }

    #[test]
    fn merge_rules() {
        let src = Arc::new(Index::in_memory(AnalyzerConfig::default()));
        for i in 0..100 {
            src.add_document(NewDocument::new(format!("doc {i}")), false).unwrap();
        }
        src.refresh().unwrap();
        let dest = Index::in_memory(AnalyzerConfig::default());
        let report = merge_indices(&[MergeSource::Open(src.clone())], &dest, &MergeOptions::default()).unwrap();
        assert_eq!(report.docs_copied, 100);
        assert!(matches!(
            merge_indices(&[MergeSource::Open(src.clone())], &dest, &MergeOptions::default()),
            Err(ShardError::DestNotEmpty)
        ));
        let appended = merge_indices(
            &[MergeSource::Open(src)],
            &dest,
            &MergeOptions { append: true, ..Default::default() },
        )
        .unwrap();
        assert_eq!(appended.docs_copied, 100);
        assert_eq!(dest.searcher().count(&QueryAst::match_all()).unwrap(), 200);

        let empty = Index::in_memory(AnalyzerConfig::default());
        let r = merge_indices(&[], &empty, &MergeOptions::default()).unwrap();
        assert_eq!((r.sources, r.docs_copied, r.docs_failed), (0, 0, 0));
    }

    #[test]
    fn unreachable_sources() {
        let dest = Index::in_memory(AnalyzerConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let err = merge_indices(&[MergeSource::Local(dir.path().join("none"))], &dest, &MergeOptions::default()).unwrap_err();
        assert!(matches!(err, ShardError::SourceUnreachable(..)), "{err:?}");
        // Nothing listens on port 1.
        let err = merge_indices(&[MergeSource::parse("http://127.0.0.1:1/idx")], &dest, &MergeOptions::default()).unwrap_err();
        assert!(matches!(err, ShardError::SourceUnreachable(..)), "{err:?}");
    }
}
