//! Positional inverted index with a document store and content dedup.
//!
//! An [`Index`] has a single writer that buffers postings in memory and any
//! number of readers. Buffered documents become searchable only when
//! [`Index::refresh`] seals them into an immutable [`Segment`]; readers hold
//! an `Arc<Snapshot>` and never observe a partially sealed state.

mod codec;
mod document;
mod segment;

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};

use crate::analysis::{Analyzer, AnalyzerConfig};

pub use document::{
    content_hash, AnalyzedDocument, ContentHash, DocId, Metadata, NewDocument, StoredDocument,
    UNDETERMINED_LANGUAGE,
};
pub use segment::{
    decode_docstore, docstore_path, encode_docstore, open_segment, write_segment, EncodedSegment,
    KeywordField, Posting, Segment, SegmentInfo, DOCSTORE_MAGIC, FORMAT_VERSION, SEGMENT_MAGIC,
};

const META_FILE: &str = "meta.json";

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("index is closed")]
    IndexClosed,
    #[error("document text is not valid UTF-8 (valid up to byte {valid_up_to})")]
    InvalidUtf8 { valid_up_to: usize },
    #[error("storage is full")]
    StorageFull,
    #[error("i/o failure: {0}")]
    IoFailure(io::Error),
    #[error("not a segment file (bad magic)")]
    BadMagic,
    #[error("unsupported segment format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt index data: {0}")]
    Corrupt(String),
    #[error("no index at {0}")]
    NotFound(PathBuf),
    #[error("an index already exists at {0}")]
    AlreadyExists(PathBuf),
}

impl From<io::Error> for IndexError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::StorageFull => IndexError::StorageFull,
            _ => IndexError::IoFailure(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Indexed(DocId),
    SkippedDuplicate(DocId),
}

/// Counters kept by the writer and persisted with the index.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WriterCounters {
    pub docs_indexed: u64,
    pub docs_skipped_duplicate: u64,
    pub raw_bytes: u64,
    /// Wall time spent in bulk ingestion runs.
    pub ingest_seconds: f64,
    /// Mean over ingestion runs of each run's peak in-flight bytes.
    pub avg_peak_memory_bytes: f64,
    pub ingest_runs: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    analyzer: AnalyzerConfig,
    next_doc_id: DocId,
    next_segment_id: u64,
    segments: Vec<u64>,
    counters: WriterCounters,
}

struct Writer {
    closed: bool,
    next_doc_id: DocId,
    next_segment_id: u64,
    buffer: HashMap<String, Vec<Posting>>,
    pending: Vec<StoredDocument>,
    dedup: HashMap<ContentHash, DocId>,
    counters: WriterCounters,
}

/// A point-in-time view of the sealed segments.
#[derive(Debug, Default)]
pub struct Snapshot {
    segments: Vec<Arc<Segment>>,
    analyzer: Analyzer,
}

impl Snapshot {
    pub fn segments(&self) -> &[Arc<Segment>] {
        &self.segments
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn doc_count(&self) -> u64 {
        self.segments.iter().map(|s| s.doc_count()).sum()
    }

    pub fn raw_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.info().raw_bytes).sum()
    }

    pub fn index_bytes(&self) -> u64 {
        self.segments.iter().map(|s| s.info().index_bytes).sum()
    }

    pub fn doc(&self, doc_id: DocId) -> Option<&StoredDocument> {
        self.segments.iter().find_map(|s| s.doc(doc_id))
    }

    /// All stored documents in doc id order.
    pub fn documents(&self) -> impl Iterator<Item = &StoredDocument> {
        self.segments.iter().flat_map(|s| s.docs().iter())
    }

    /// Distinct values of a metadata keyword field, sorted.
    pub fn keyword_values(&self, field: KeywordField) -> Vec<String> {
        let mut out: Vec<String> = self
            .segments
            .iter()
            .flat_map(|s| s.keyword_values(field).map(str::to_owned))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

pub struct Index {
    dir: Option<PathBuf>,
    analyzer: Analyzer,
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl std::fmt::Debug for Index {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Index").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Index {
    /// An index that lives only in memory. Refresh seals segments but writes
    /// nothing to disk.
    pub fn in_memory(config: AnalyzerConfig) -> Index {
        Index::from_parts(None, config, Vec::new(), 0, 0, WriterCounters::default())
    }

    /// Creates a new, empty index in `dir`, which must not already hold one.
    pub fn create(dir: impl AsRef<Path>, config: AnalyzerConfig) -> Result<Index, IndexError> {
        let dir = dir.as_ref();
        if dir.join(META_FILE).exists() {
            return Err(IndexError::AlreadyExists(dir.to_owned()));
        }
        fs::create_dir_all(dir)?;
        let index = Index::from_parts(
            Some(dir.to_owned()),
            config,
            Vec::new(),
            0,
            0,
            WriterCounters::default(),
        );
        index.persist_meta(&index.lock_writer())?;
        Ok(index)
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Index, IndexError> {
        let dir = dir.as_ref();
        let meta_path = dir.join(META_FILE);
        if !meta_path.exists() {
            return Err(IndexError::NotFound(dir.to_owned()));
        }
        let meta: Meta = serde_json::from_slice(&fs::read(&meta_path)?)
            .map_err(|e| IndexError::Corrupt(format!("meta.json: {e}")))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion(meta.format_version));
        }
        let mut segments = Vec::with_capacity(meta.segments.len());
        for id in &meta.segments {
            segments.push(Arc::new(open_segment(&segment_path(dir, *id))?));
        }
        let index = Index::from_parts(
            Some(dir.to_owned()),
            meta.analyzer,
            segments,
            meta.next_doc_id,
            meta.next_segment_id,
            meta.counters,
        );
        Ok(index)
    }

    pub fn open_or_create(dir: impl AsRef<Path>, config: AnalyzerConfig) -> Result<Index, IndexError> {
        match Index::open(dir.as_ref()) {
            Err(IndexError::NotFound(_)) => Index::create(dir, config),
            other => other,
        }
    }

    fn from_parts(
        dir: Option<PathBuf>,
        config: AnalyzerConfig,
        segments: Vec<Arc<Segment>>,
        next_doc_id: DocId,
        next_segment_id: u64,
        counters: WriterCounters,
    ) -> Index {
        let analyzer = Analyzer::new(config);
        let dedup = segments
            .iter()
            .flat_map(|s| s.docs().iter().map(|d| (d.content_hash, d.doc_id)))
            .collect();
        Index {
            dir,
            writer: Mutex::new(Writer {
                closed: false,
                next_doc_id,
                next_segment_id,
                buffer: HashMap::new(),
                pending: Vec::new(),
                dedup,
                counters,
            }),
            snapshot: RwLock::new(Arc::new(Snapshot {
                segments,
                analyzer: analyzer.clone(),
            })),
            analyzer,
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    /// The last refreshed view of the index.
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock poisoned").clone()
    }

    fn lock_writer(&self) -> MutexGuard<'_, Writer> {
        self.writer.lock().expect("writer lock poisoned")
    }

    pub fn add_document(&self, doc: NewDocument, dedup: bool) -> Result<AddOutcome, IndexError> {
        let analyzed = doc.analyze(&self.analyzer);
        self.add_analyzed(analyzed, dedup)
    }

    /// Adds a document that was analyzed with this index's analyzer.
    pub fn add_analyzed(&self, doc: AnalyzedDocument, dedup: bool) -> Result<AddOutcome, IndexError> {
        let mut w = self.lock_writer();
        w.add(doc, dedup)
    }

    /// Adds a batch under a single acquisition of the writer lock.
    pub fn add_batch(
        &self,
        docs: Vec<AnalyzedDocument>,
        dedup: bool,
    ) -> Vec<Result<AddOutcome, IndexError>> {
        let mut w = self.lock_writer();
        docs.into_iter().map(|d| w.add(d, dedup)).collect()
    }

    pub fn pending_docs(&self) -> usize {
        self.lock_writer().pending.len()
    }

    /// Seals buffered documents into a new segment and publishes it to
    /// readers. Returns `None` when nothing was pending.
    pub fn refresh(&self) -> Result<Option<SegmentInfo>, IndexError> {
        let mut w = self.lock_writer();
        if w.pending.is_empty() {
            return Ok(None);
        }
        let segment_id = w.next_segment_id;
        let buffer = std::mem::take(&mut w.buffer);
        let docs = std::mem::take(&mut w.pending);
        let (segment, encoded) = Segment::build_encoded(segment_id, buffer, docs);
        if let Some(dir) = &self.dir {
            segment::write_encoded(&encoded, &segment_path(dir, segment_id))?;
        }
        drop(encoded);
        w.next_segment_id += 1;
        let info = segment.info();

        let mut segments = self.snapshot().segments.clone();
        segments.push(Arc::new(segment));
        let ids: Vec<u64> = segments.iter().map(|s| s.id()).collect();
        if self.dir.is_some() {
            self.persist_meta_with(&w, ids)?;
        }
        *self.snapshot.write().expect("snapshot lock poisoned") = Arc::new(Snapshot {
            segments,
            analyzer: self.analyzer.clone(),
        });
        Ok(Some(info))
    }

    /// Refreshes pending documents and rejects further writes.
    pub fn close(&self) -> Result<(), IndexError> {
        self.refresh()?;
        self.lock_writer().closed = true;
        Ok(())
    }

    pub fn counters(&self) -> WriterCounters {
        self.lock_writer().counters.clone()
    }

    /// Folds one bulk run's wall time and peak memory into the counters.
    pub fn record_ingest_run(&self, wall_seconds: f64, peak_bytes: u64) -> Result<(), IndexError> {
        let mut w = self.lock_writer();
        let c = &mut w.counters;
        c.ingest_seconds += wall_seconds;
        c.avg_peak_memory_bytes = (c.avg_peak_memory_bytes * c.ingest_runs as f64
            + peak_bytes as f64)
            / (c.ingest_runs + 1) as f64;
        c.ingest_runs += 1;
        self.persist_meta(&w)
    }

    fn persist_meta(&self, w: &Writer) -> Result<(), IndexError> {
        let ids = self.snapshot().segments.iter().map(|s| s.id()).collect();
        self.persist_meta_with(w, ids)
    }

    fn persist_meta_with(&self, w: &Writer, segments: Vec<u64>) -> Result<(), IndexError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let meta = Meta {
            format_version: FORMAT_VERSION,
            analyzer: self.analyzer.config().clone(),
            next_doc_id: w.next_doc_id,
            next_segment_id: w.next_segment_id,
            segments,
            counters: w.counters.clone(),
        };
        let bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        segment::write_atomic(&dir.join(META_FILE), &bytes)
    }
}

impl Writer {
    fn add(&mut self, doc: AnalyzedDocument, dedup: bool) -> Result<AddOutcome, IndexError> {
        if self.closed {
            return Err(IndexError::IndexClosed);
        }
        if dedup {
            if let Some(existing) = self.dedup.get(&doc.hash) {
                self.counters.docs_skipped_duplicate += 1;
                return Ok(AddOutcome::SkippedDuplicate(*existing));
            }
        }
        let doc_id = self.next_doc_id;
        self.next_doc_id += 1;
        for (term, positions) in doc.terms {
            self.buffer
                .entry(term)
                .or_default()
                .push(Posting { doc_id, positions });
        }
        self.dedup.entry(doc.hash).or_insert(doc_id);
        self.counters.docs_indexed += 1;
        self.counters.raw_bytes += doc.doc.text.len() as u64;
        self.pending.push(StoredDocument {
            doc_id,
            external_id: doc.doc.external_id,
            text: doc.doc.text,
            metadata: doc.doc.metadata,
            content_hash: doc.hash,
            token_count: doc.token_count,
        });
        Ok(AddOutcome::Indexed(doc_id))
    }
}

fn segment_path(dir: &Path, id: u64) -> PathBuf {
    dir.join(format!("seg_{id:06}.ftsg"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx() -> Index {
        Index::in_memory(AnalyzerConfig::default())
    }

    fn visible(index: &Index, term: &str) -> usize {
        index
            .snapshot()
            .segments()
            .iter()
            .map(|s| s.doc_ids_for(term).len())
            .sum()
    }

    #[test]
    fn duplicate_text_is_skipped() {
        let index = idx();
        assert_eq!(
            index.add_document(NewDocument::new("hello world"), true).unwrap(),
            AddOutcome::Indexed(0)
        );
        assert_eq!(
            index.add_document(NewDocument::new("hello world"), true).unwrap(),
            AddOutcome::SkippedDuplicate(0)
        );
        // Without the flag the same text is indexed again.
        assert_eq!(
            index.add_document(NewDocument::new("hello world"), false).unwrap(),
            AddOutcome::Indexed(1)
        );
    }

    #[test]
    fn n_identical_documents() {
        let index = idx();
        let outcomes: Vec<_> = (0..50)
            .map(|_| index.add_document(NewDocument::new("same"), true).unwrap())
            .collect();
        assert_eq!(outcomes.iter().filter(|o| matches!(o, AddOutcome::Indexed(_))).count(), 1);
        let c = index.counters();
        assert_eq!((c.docs_indexed, c.docs_skipped_duplicate), (1, 49));
    }

    #[test]
    fn eightfold_replication_skips_seven_eighths() {
        let index = idx();
        for copy in 0..8 {
            for k in 0..25 {
                let _ = copy;
                index
                    .add_document(NewDocument::new(format!("unique text {k}")), true)
                    .unwrap();
            }
        }
        let c = index.counters();
        assert_eq!(c.docs_skipped_duplicate, 175);
        assert_eq!(c.docs_skipped_duplicate as f64 / 200.0, 0.875);
    }

    #[test]
    fn refresh_delimits_visibility() {
        let index = idx();
        index.add_document(NewDocument::new("hello"), false).unwrap();
        assert_eq!(visible(&index, "hello"), 0);
        let info = index.refresh().unwrap().unwrap();
        assert_eq!(info.doc_count, 1);
        assert_eq!(visible(&index, "hello"), 1);
        assert_eq!(index.refresh().unwrap(), None);
        assert_eq!(index.snapshot().segments().len(), 1);
    }

    #[test]
    fn second_refresh_reports_batch() {
        let index = idx();
        index.add_document(NewDocument::new("first"), false).unwrap();
        index.refresh().unwrap();
        for i in 0..100 {
            index.add_document(NewDocument::new(format!("doc {i}")), false).unwrap();
        }
        assert_eq!(index.refresh().unwrap().unwrap().doc_count, 100);
    }

    #[test]
    fn old_snapshots_are_stable() {
        let index = idx();
        index.add_document(NewDocument::new("a"), false).unwrap();
        index.refresh().unwrap();
        let before = index.snapshot();
        index.add_document(NewDocument::new("a"), false).unwrap();
        index.refresh().unwrap();
        assert_eq!(before.doc_count(), 1);
        assert_eq!(index.snapshot().doc_count(), 2);
    }

    #[test]
    fn closed_index_rejects_writes() {
        let index = idx();
        index.add_document(NewDocument::new("x"), false).unwrap();
        index.close().unwrap();
        assert_eq!(index.snapshot().doc_count(), 1);
        assert!(matches!(
            index.add_document(NewDocument::new("y"), false),
            Err(IndexError::IndexClosed)
        ));
    }

    #[test]
    fn persisted_index_reopens_with_dedup_registry() {
        let dir = tempfile::tempdir().unwrap();
        {
            let index = Index::create(dir.path(), AnalyzerConfig::default()).unwrap();
            index.add_document(NewDocument::new("alpha beta").with_id("a"), true).unwrap();
            index.add_document(NewDocument::new("gamma"), true).unwrap();
            index.refresh().unwrap();
            index.add_document(NewDocument::new("unrefreshed"), true).unwrap();
        }
        assert!(matches!(
            Index::create(dir.path(), AnalyzerConfig::default()),
            Err(IndexError::AlreadyExists(_))
        ));
        let index = Index::open(dir.path()).unwrap();
        let snap = index.snapshot();
        assert_eq!(snap.doc_count(), 2);
        assert_eq!(snap.doc(0).unwrap().external_id.as_deref(), Some("a"));
        assert_eq!(
            index.add_document(NewDocument::new("gamma"), true).unwrap(),
            AddOutcome::SkippedDuplicate(1)
        );
        assert_eq!(
            index.add_document(NewDocument::new("delta"), true).unwrap(),
            AddOutcome::Indexed(2)
        );
        index.refresh().unwrap();
        let reopened = Index::open(dir.path()).unwrap();
        assert_eq!(reopened.snapshot().doc_count(), 3);
        let on_disk: u64 = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| {
                let p = e.path();
                matches!(p.extension().and_then(|x| x.to_str()), Some("ftsg" | "docs"))
            })
            .map(|e| e.metadata().unwrap().len())
            .sum();
        assert_eq!(on_disk, reopened.snapshot().index_bytes());
    }

    #[test]
    fn open_missing_index() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Index::open(dir.path().join("nope")), Err(IndexError::NotFound(_))));
    }
}
