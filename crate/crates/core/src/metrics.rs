//! Indexing statistics and the query-latency benchmark.

use std::io;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::index::{DocId, Index};
use crate::query::{QueryAst, QueryError, Searcher};

/// One row of the indexing statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub dataset_label: String,
    pub data_size_bytes: u64,
    pub wall_seconds: f64,
    pub indexing_rate: f64,
    pub size_ratio: f64,
    pub avg_peak_memory_bytes: f64,
    pub docs_indexed: u64,
    pub index_size_bytes: u64,
}

/// CSV header of [`IndexStats`], in serialization order.
pub const STATS_COLUMNS: [&str; 8] = [
    "dataset_label",
    "data_size_bytes",
    "wall_seconds",
    "indexing_rate",
    "size_ratio",
    "avg_peak_memory_bytes",
    "docs_indexed",
    "index_size_bytes",
];

impl IndexStats {
    pub fn new(
        dataset_label: impl Into<String>,
        data_size_bytes: u64,
        index_size_bytes: u64,
        docs_indexed: u64,
        wall_seconds: f64,
        avg_peak_memory_bytes: f64,
    ) -> Self {
        IndexStats {
            dataset_label: dataset_label.into(),
            data_size_bytes,
            wall_seconds,
            indexing_rate: ratio(docs_indexed as f64, wall_seconds),
            size_ratio: ratio(index_size_bytes as f64, data_size_bytes as f64),
            avg_peak_memory_bytes,
            docs_indexed,
            index_size_bytes,
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Statistics of a refreshed index, from its writer counters and segment sizes.
pub fn snapshot_stats(index: &Index, dataset_label: &str) -> IndexStats {
    let c = index.counters();
    IndexStats::new(
        dataset_label,
        c.raw_bytes,
        index.snapshot().index_bytes(),
        c.docs_indexed,
        c.ingest_seconds,
        c.avg_peak_memory_bytes,
    )
}

pub fn write_stats_csv<W: io::Write>(out: W, rows: &[IndexStats]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()
}

pub fn read_stats_csv<R: io::Read>(input: R) -> io::Result<Vec<IndexStats>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// 13 query lengths between 1 and 300 words.
pub const DEFAULT_LENGTHS: [usize; 13] = [1, 2, 5, 10, 20, 40, 60, 90, 120, 160, 200, 250, 300];
pub const DEFAULT_SAMPLES_PER_LENGTH: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no indexed document has at least {0} tokens")]
    CorpusTooSmall(usize),
    #[error("query length must be positive")]
    ZeroLength,
    #[error(transparent)]
    Query(#[from] QueryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthLatency {
    pub length: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub samples: Vec<f64>,
    /// Sampled queries that matched the document they were cut from.
    pub self_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBenchReport {
    pub lengths: Vec<usize>,
    pub samples_per_length: usize,
    pub seed: u64,
    pub doc_count: u64,
    pub per_length: Vec<LengthLatency>,
}

impl LatencyBenchReport {
    pub fn measurement_count(&self) -> usize {
        self.per_length.iter().map(|l| l.samples.len()).sum()
    }

    pub fn all_self_hits(&self) -> bool {
        self.per_length.iter().all(|l| l.self_hits == l.samples.len())
    }

    /// Rank correlation between query length and mean latency.
    pub fn length_latency_spearman(&self) -> f64 {
        let x: Vec<f64> = self.per_length.iter().map(|l| l.length as f64).collect();
        let y: Vec<f64> = self.per_length.iter().map(|l| l.mean_ms).collect();
        spearman(&x, &y)
    }

    /// `length,mean_ms,std_ms` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["length", "mean_ms", "std_ms"])?;
        for l in &self.per_length {
            w.write_record([l.length.to_string(), l.mean_ms.to_string(), l.std_ms.to_string()])?;
        }
        w.flush()
    }
}

/// A phrase query cut verbatim from an indexed document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledQuery {
    pub source_doc: DocId,
    pub text: String,
}

/// Draws `samples` contiguous token runs of `length` tokens from indexed
/// documents. The same seed and snapshot always give the same queries.
pub fn sample_phrases(
    searcher: &Searcher,
    length: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<SampledQuery>, BenchError> {
    if length == 0 {
        return Err(BenchError::ZeroLength);
    }
    let snap = searcher.snapshot();
    let candidates: Vec<DocId> = snap
        .documents()
        .filter(|d| d.token_count as usize >= length)
        .map(|d| d.doc_id)
        .collect();
    if candidates.is_empty() {
        return Err(BenchError::CorpusTooSmall(length));
    }
    let analyzer = snap.analyzer();
    (0..samples)
        .map(|_| {
            let doc_id = *candidates.choose(rng).expect("non-empty");
            let doc = snap.doc(doc_id).expect("candidate exists");
            let terms = analyzer.terms(&doc.text);
            let start = rng.gen_range(0..=terms.len() - length);
            Ok(SampledQuery {
                source_doc: doc_id,
                text: terms[start..start + length].join(" "),
            })
        })
        .collect()
}

/// Times slop-0 phrase queries of each length, sequentially, after one
/// discarded warm-up pass per length.
pub fn bench_query_latency(
    searcher: &Searcher,
    lengths: &[usize],
    samples_per_length: usize,
    seed: u64,
) -> Result<LatencyBenchReport, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_length = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let queries: Vec<(QueryAst, DocId)> = sample_phrases(searcher, length, samples_per_length, &mut rng)?
            .into_iter()
            .map(|q| (QueryAst::phrase(q.text, 0), q.source_doc))
            .collect();
        for (ast, _) in &queries {
            searcher.search(ast, 10)?;
        }
        let mut samples = Vec::with_capacity(queries.len());
        for (ast, _) in &queries {
            let t = Instant::now();
            searcher.search(ast, 10)?;
            samples.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let mut self_hits = 0;
        for (ast, doc) in &queries {
            if searcher.matches_doc(ast, *doc)? {
                self_hits += 1;
            }
        }
        let (mean_ms, std_ms) = mean_std(&samples);
        per_length.push(LengthLatency {
            length,
            mean_ms,
            std_ms,
            samples,
            self_hits,
        });
    }
    Ok(LatencyBenchReport {
        lengths: lengths.to_vec(),
        samples_per_length,
        seed,
        doc_count: searcher.doc_count(),
        per_length,
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Ranks starting at 1, ties receiving the mean of their positions.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Spearman rank correlation; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs paired samples");
    pearson(&ranks(x), &ranks(y))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(io::BufWriter::new(f), value).map_err(io::Error::other)
}
