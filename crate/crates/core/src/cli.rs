//! The `corpusdex` command line.
//!
//! Machine-readable output (JSON lines) goes to stdout, logs to stderr.
//! Exit codes: 0 success, 1 operational failure, 2 usage error.

use std::io::{self, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{AnalyzerConfig, Stage};
use crate::audit::{self, DictFormat, DictOptions, ExportFormat, Measure};
use crate::bulk::{
    available_cores, bulk_index, plan_bulk_params, sample_avg_doc_size, BulkOptions, BulkParams, InputFiles,
    RefreshPolicy, DEFAULT_QUEUE_SIZE,
};
use crate::index::Index;
use crate::metrics::{self, DEFAULT_LENGTHS, DEFAULT_SAMPLES_PER_LENGTH};
use crate::query::{QueryAst, Searcher};
use crate::server::{Server, ServerConfig, DEFAULT_MAX_BODY_BYTES, DEFAULT_PORT};
use crate::shard::{self, CountSource, MergeOptions, MergeSource, ShardSet, DEFAULT_PAGE_SIZE};
use crate::synth::{self, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "corpusdex", version, about = "Full-text indexing, phrase search and term audits for text corpora")]
pub struct Cli {
    /// Log verbosity on stderr.
    #[arg(long, global = true, default_value = "info", value_enum)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bulk-index JSON Lines (optionally .gz) or Parquet files.
    Index(IndexArgs),
    /// Print matching documents as JSON lines.
    Search(SearchArgs),
    /// Print the number of matching documents.
    Count(CountArgs),
    /// Count dictionary terms per language.
    Audit(AuditArgs),
    /// Measure phrase query latency against query length.
    Bench(BenchArgs),
    /// Merge indices, shard sets or remote indices into one index.
    Merge(MergeArgs),
    /// Print indexing statistics of an index.
    Stats(StatsArgs),
    /// Run the HTTP server.
    Serve(ServeArgs),
    /// Write a seeded synthetic corpus.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Input files (.jsonl, .jsonl.gz, .parquet).
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Index directory; created if missing.
    #[arg(long)]
    pub index: PathBuf,
    /// Split into this many hash-routed shards under the index directory.
    #[arg(long)]
    pub shards: Option<usize>,
    /// Worker threads [default: planned]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Documents per chunk [default: planned]
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Payload cap per chunk in bytes.
    #[arg(long, default_value_t = 10 * 1024 * 1024)]
    pub max_chunk_bytes: u64,
    /// Chunks buffered between reader and workers.
    #[arg(long, default_value_t = DEFAULT_QUEUE_SIZE)]
    pub queue_size: usize,
    /// Memory budget for in-flight chunks, in bytes.
    #[arg(long, default_value_t = 1024 * 1024 * 1024)]
    pub ram_budget: u64,
    /// Refresh every N seconds during the run instead of only at the end.
    #[arg(long)]
    pub refresh_interval: Option<f64>,
    /// Skip documents whose text was already indexed.
    #[arg(long)]
    pub dedup: bool,
    /// Allow more workers than available cores.
    #[arg(long)]
    pub oversubscribe: bool,
    /// Analyzer stages for a new index.
    #[arg(long, value_delimiter = ',', default_value = "html_strip,tokenize,lowercase,ascii_fold")]
    pub analyzer: Vec<String>,
    /// Append an indexing statistics row to this CSV file.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    /// Dataset label for the statistics row [default: index directory name]
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Index directory or shard set root.
    #[arg(long)]
    pub index: PathBuf,
    /// Phrase to match.
    #[arg(long, conflicts_with_all = ["query", "terms"])]
    pub phrase: Option<String>,
    /// Maximum number of intervening tokens for --phrase.
    #[arg(long, default_value_t = 0)]
    pub slop: u32,
    /// Match documents containing any of these words.
    #[arg(long, conflicts_with = "query")]
    pub terms: Option<String>,
    /// Full query as JSON.
    #[arg(long)]
    pub query: Option<String>,
    /// Restrict to documents of this language.
    #[arg(long)]
    pub lang: Option<String>,
}

impl QueryArgs {
    fn ast(&self) -> Result<QueryAst, UsageError> {
        let base = if let Some(p) = &self.phrase {
            QueryAst::phrase(p.clone(), self.slop)
        } else if let Some(t) = &self.terms {
            QueryAst::matches(t.clone())
        } else if let Some(q) = &self.query {
            let v: serde_json::Value =
                serde_json::from_str(q).map_err(|e| UsageError(format!("--query is not JSON: {e}")))?;
            QueryAst::from_json(&v).map_err(|e| UsageError(format!("--query: {e}")))?
        } else {
            QueryAst::match_all()
        };
        Ok(match &self.lang {
            Some(l) => QueryAst::must(vec![base, QueryAst::keyword("language", l.clone())]),
            None => base,
        })
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Hits to print; 0 prints the count only.
    #[arg(long, default_value_t = 10)]
    pub limit: usize,
    /// Hits to skip.
    #[arg(long, default_value_t = 0)]
    pub from: usize,
    /// Include document text in hits.
    #[arg(long)]
    pub source: bool,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Also report total occurrences.
    #[arg(long)]
    pub occurrences: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Index directory or shard set root.
    #[arg(long)]
    pub index: PathBuf,
    /// Dictionary files: one term per line, or `.csv` with `language,term`.
    #[arg(long, required = true, num_args = 1..)]
    pub dict: Vec<PathBuf>,
    /// Language of line-format dictionaries; `*` audits every language.
    #[arg(long, default_value = "*")]
    pub lang: String,
    #[arg(long, default_value_t = 0)]
    pub slop: u32,
    /// Maximum words per dictionary term.
    #[arg(long, default_value_t = audit::DEFAULT_MAX_TERM_WORDS)]
    pub max_words: usize,
    /// Long-form report; `.json` writes JSON, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Language x term matrix as CSV.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    /// Measure used by --heatmap and --top-k.
    #[arg(long, value_enum, default_value = "occurrence-count")]
    pub measure: MeasureArg,
    /// Print the k highest-ranked terms per language.
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    DocCount,
    OccurrenceCount,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::DocCount => Measure::DocCount,
            MeasureArg::OccurrenceCount => Measure::OccurrenceCount,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Query lengths in words.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS)]
    pub lengths: Vec<usize>,
    /// Queries sampled per length.
    #[arg(long, default_value_t = DEFAULT_SAMPLES_PER_LENGTH)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Report file; `.json` writes the full report, anything else CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Index directories, shard set roots or `http://host:port/index` URLs.
    #[arg(long, required = true, num_args = 1..)]
    pub sources: Vec<String>,
    /// Destination index directory; created if missing.
    #[arg(long)]
    pub dest: PathBuf,
    #[arg(long)]
    pub dedup: bool,
    /// Allow a destination that already holds documents.
    #[arg(long)]
    pub append: bool,
    /// Documents per request when draining remote sources.
    #[arg(long, default_value_t = DEFAULT_PAGE_SIZE)]
    pub page_size: usize,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
    /// Append the row to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    /// 0 picks a free port.
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    pub max_body_bytes: usize,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output file: `.parquet`, otherwise JSON Lines.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1_000)]
    pub docs: usize,
    #[arg(long, default_value_t = 5_000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 20)]
    pub min_tokens: usize,
    #[arg(long, default_value_t = 200)]
    pub max_tokens: usize,
    /// Comma-separated ISO 639-3 codes; documents cycle through them.
    #[arg(long, value_delimiter = ',', default_value = "eng")]
    pub languages: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Bad flag values detected after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.log_level);
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let usage = e.downcast_ref::<UsageError>().is_some();
            eprintln!("error: {e:#}");
            if usage {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Off => log::LevelFilter::Off,
        LogLevel::Error => log::LevelFilter::Error,
        LogLevel::Warn => log::LevelFilter::Warn,
        LogLevel::Info => log::LevelFilter::Info,
        LogLevel::Debug => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn emit<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Index(a) => cmd_index(a),
        Command::Search(a) => cmd_search(a),
        Command::Count(a) => cmd_count(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

fn parse_analyzer(stages: &[String]) -> Result<AnalyzerConfig, UsageError> {
    let stages: Vec<Stage> = stages
        .iter()
        .map(|s| {
            serde_json::from_value(json!(s.trim())).map_err(|_| UsageError(format!("unknown analyzer stage {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    AnalyzerConfig::new(stages).map_err(|e| UsageError(format!("--analyzer: {e}")))
}

fn label_for(index: &Path, label: Option<String>) -> String {
    label.unwrap_or_else(|| {
        index
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "index".to_owned())
    })
}

fn append_stats_csv(path: &Path, row: &metrics::IndexStats) -> anyhow::Result<()> {
    let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
    let mut buf = Vec::new();
    metrics::write_stats_csv(&mut buf, std::slice::from_ref(row))?;
    let text = String::from_utf8(buf)?;
    let body = if exists {
        text.split_once('\n').map_or("", |(_, rest)| rest).to_owned()
    } else {
        text
    };
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

fn cmd_index(a: IndexArgs) -> anyhow::Result<()> {
    let analyzer = parse_analyzer(&a.analyzer)?;
    let cores = available_cores();
    let mut params = if a.workers.is_none() || a.chunk_size.is_none() {
        let avg = sample_avg_doc_size(&a.input, 1_000)?.unwrap_or(1).min(a.max_chunk_bytes);
        let planned = plan_bulk_params(avg, a.max_chunk_bytes, cores, a.ram_budget)?;
        log::info!(
            "planned worker_count={} chunk_size={} from avg_doc_size={avg}",
            planned.worker_count,
            planned.chunk_size
        );
        planned
    } else {
        BulkParams {
            max_chunk_bytes: a.max_chunk_bytes,
            ..BulkParams::default()
        }
    };
    if let Some(w) = a.workers {
        params.worker_count = w;
    }
    if let Some(c) = a.chunk_size {
        params.chunk_size = c;
    }
    params.queue_size = a.queue_size;
    if let Some(s) = a.refresh_interval {
        params.refresh_policy = RefreshPolicy::EveryNSeconds(s);
    }
    let limit = if a.oversubscribe { params.worker_count } else { cores };
    params.validate(limit).map_err(|e| UsageError(e.to_string()))?;
    emit(&json!({"params": params}))?;
    let options = BulkOptions {
        dedup: a.dedup,
        oversubscribe: a.oversubscribe,
        ..BulkOptions::default()
    };
    let label = label_for(&a.index, a.label);
    let input = InputFiles::new(a.input.clone());
    let stats = if let Some(n) = a.shards {
        if n == 0 {
            return Err(UsageError("--shards must be positive".into()).into());
        }
        let set = if shard::is_shard_root(&a.index) {
            ShardSet::open(&a.index)?
        } else {
            ShardSet::create(&a.index, n, analyzer)?
        };
        if set.len() != n {
            bail!("{} holds {} shards, not {n}", a.index.display(), set.len());
        }
        let report = set.bulk_index(input, &params, &options)?;
        emit(&json!({"report": report}))?;
        let rows: Vec<_> = (0..set.len())
            .map(|i| set.shard(i).map(|s| metrics::snapshot_stats(s, &format!("{label}/shard_{i:03}"))))
            .collect::<Result<_, _>>()?;
        metrics::IndexStats::new(
            label,
            rows.iter().map(|r| r.data_size_bytes).sum(),
            rows.iter().map(|r| r.index_size_bytes).sum(),
            report.docs_indexed,
            report.wall_seconds,
            rows.iter().map(|r| r.avg_peak_memory_bytes).sum(),
        )
    } else {
        let index = Index::open_or_create(&a.index, analyzer)?;
        let report = bulk_index(&index, input, &params, &options)?;
        emit(&json!({"report": report}))?;
        metrics::snapshot_stats(&index, &label)
    };
    emit(&json!({"stats": stats}))?;
    if let Some(path) = &a.stats_out {
        append_stats_csv(path, &stats)?;
    }
    Ok(())
}

/// A single index or a shard set, opened read-only.
enum Target {
    Single(Searcher),
    Sharded(shard::ShardedSearcher),
}

impl Target {
    fn open(path: &Path) -> anyhow::Result<Target> {
        if shard::is_shard_root(path) {
            let set = ShardSet::open(path)?;
            Ok(Target::Sharded(set.searcher()?))
        } else {
            let index = Index::open(path).with_context(|| format!("cannot open index {}", path.display()))?;
            Ok(Target::Single(index.searcher()))
        }
    }

    fn counts(&self) -> &dyn CountSource {
        match self {
            Target::Single(s) => s,
            Target::Sharded(s) => s,
        }
    }

    fn searchers(&self) -> Vec<&Searcher> {
        match self {
            Target::Single(s) => vec![s],
            Target::Sharded(s) => s.searchers().iter().collect(),
        }
    }
}

fn cmd_search(a: SearchArgs) -> anyhow::Result<()> {
    let ast = a.query.ast()?;
    let target = Target::open(&a.query.index)?;
    let total = target.counts().count(&ast)?;
    if a.limit == 0 {
        return emit(&json!({"count": total}));
    }
    let mut skip = a.from;
    let mut remaining = a.limit;
    for (shard_ix, s) in target.searchers().into_iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let n = s.count(&ast)? as usize;
        if skip >= n {
            skip -= n;
            continue;
        }
        let page = s.search_page(&ast, skip, remaining)?;
        skip = 0;
        remaining -= page.hits.len();
        for h in page.hits {
            let mut line = json!({
                "doc_id": h.doc_id,
                "id": h.external_id,
                "occurrence_count": h.occurrence_count,
            });
            if matches!(target, Target::Sharded(_)) {
                line["shard"] = json!(shard_ix);
            }
            if a.source {
                if let Some(d) = s.snapshot().doc(h.doc_id) {
                    line["text"] = json!(d.text);
                    line["language"] = json!(d.metadata.language);
                }
            }
            emit(&line)?;
        }
    }
    emit(&json!({"total": total}))
}

fn cmd_count(a: CountArgs) -> anyhow::Result<()> {
    let ast = a.query.ast()?;
    let target = Target::open(&a.query.index)?;
    let src = target.counts();
    let mut line = json!({"count": src.count(&ast)?});
    if a.occurrences {
        line["occurrences"] = json!(src.occurrence_count(&ast, None)?);
    }
    emit(&line)
}

fn cmd_audit(a: AuditArgs) -> anyhow::Result<()> {
    let target = Target::open(&a.index)?;
    let analyzer = target.searchers()[0].snapshot().analyzer().clone();
    let mut dicts = Vec::new();
    for path in &a.dict {
        let opts = DictOptions {
            language: a.lang.clone(),
            max_words: a.max_words,
            provenance: path.display().to_string(),
            ..DictOptions::default()
        };
        dicts.extend(audit::load_dictionary(path, DictFormat::detect(path), &analyzer, &opts)?);
    }
    let report = audit::run_audit(target.counts(), &dicts, a.slop, &a.index.display().to_string());
    for t in &report.terms {
        if let Some(e) = &t.error {
            log::warn!("{} {:?}: {e}", t.language, t.term);
        }
    }
    if let Some(out) = &a.out {
        let format = if out.extension().is_some_and(|e| e == "json") {
            ExportFormat::Json
        } else {
            ExportFormat::Csv
        };
        audit::export_report(&report, format, out)?;
    }
    if let Some(path) = &a.heatmap {
        audit::export_report(&report, ExportFormat::HeatmapCsv(a.measure.into()), path)?;
    }
    if let Some(k) = a.top_k {
        for lang in &report.languages {
            let top = audit::top_k(&report, &lang.language, k, a.measure.into())?;
            emit(&json!({"top_k": {"language": lang.language, "k": k, "terms": top}}))?;
        }
    }
    for lang in &report.languages {
        emit(&json!({"language_total": lang}))?;
    }
    emit(&json!({"terms": report.terms.len(), "languages": report.languages.len(), "slop": a.slop}))
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<()> {
    if a.samples == 0 {
        return Err(UsageError("--samples must be positive".into()).into());
    }
    let index = Index::open(&a.index).with_context(|| format!("cannot open index {}", a.index.display()))?;
    let report = metrics::bench_query_latency(&index.searcher(), &a.lengths, a.samples, a.seed)?;
    for l in &report.per_length {
        emit(&json!({"length": l.length, "mean_ms": l.mean_ms, "std_ms": l.std_ms, "samples": l.samples.len(), "self_hits": l.self_hits}))?;
    }
    if let Some(out) = &a.out {
        if out.extension().is_some_and(|e| e == "json") {
            metrics::write_json(out, &report)?;
        } else {
            report.write_csv(std::fs::File::create(out)?)?;
        }
    }
    emit(&json!({
        "measurements": report.measurement_count(),
        "spearman": report.length_latency_spearman(),
        "all_self_hits": report.all_self_hits(),
    }))
}

fn cmd_merge(a: MergeArgs) -> anyhow::Result<()> {
    let mut sources = Vec::new();
    for s in &a.sources {
        match MergeSource::parse(s) {
            MergeSource::Local(p) if shard::is_shard_root(&p) => {
                sources.extend(shard::shard_dirs(&p)?.into_iter().map(MergeSource::Local));
            }
            other => sources.push(other),
        }
    }
    let analyzer = sources
        .iter()
        .find_map(|s| match s {
            MergeSource::Local(p) => Index::open(p).ok().map(|i| i.analyzer().config().clone()),
            _ => None,
        })
        .unwrap_or_default();
    let dest = Index::open_or_create(&a.dest, analyzer)?;
    let mut options = MergeOptions {
        dedup: a.dedup,
        append: a.append,
        page_size: a.page_size,
        ..MergeOptions::default()
    };
    if let Some(w) = a.workers {
        options.params.worker_count = w;
    }
    let report = shard::merge_indices(&sources, &dest, &options)?;
    emit(&json!({"merge": report}))?;
    emit(&json!({"stats": metrics::snapshot_stats(&dest, &label_for(&a.dest, None))}))
}

fn cmd_stats(a: StatsArgs) -> anyhow::Result<()> {
    let index = Index::open(&a.index).with_context(|| format!("cannot open index {}", a.index.display()))?;
    let stats = metrics::snapshot_stats(&index, &label_for(&a.index, a.label));
    if let Some(path) = &a.out {
        append_stats_csv(path, &stats)?;
    }
    emit(&stats)
}

fn cmd_serve(a: ServeArgs) -> anyhow::Result<()> {
    let cfg = ServerConfig {
        bind: a.bind,
        port: a.port,
        data_dir: a.data_dir,
        max_body_bytes: a.max_body_bytes,
    };
    if !cfg.bind.is_loopback() {
        log::warn!("binding to non-loopback address {}", cfg.bind);
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let server = Server::bind(&cfg).await?;
        let addr = server.local_addr()?;
        emit(&json!({"listening": addr.to_string(), "port": addr.port()}))?;
        log::info!("serving {} on http://{addr}", cfg.data_dir.display());
        server
            .run(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    if a.vocab == 0 || a.min_tokens > a.max_tokens {
        return Err(UsageError("need --vocab > 0 and --min-tokens <= --max-tokens".into()).into());
    }
    let cfg = SynthConfig {
        docs: a.docs,
        vocab_size: a.vocab,
        min_tokens: a.min_tokens,
        max_tokens: a.max_tokens,
        languages: a.languages,
        zipf_exponent: a.zipf,
        seed: a.seed,
    };
    let is_parquet = a
        .out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("parquet") || e.eq_ignore_ascii_case("pq"));
    let n = if is_parquet {
        let docs: Vec<_> = synth::generate(cfg).collect();
        synth::write_parquet(&a.out, &docs)?;
        docs.len()
    } else {
        let docs: Vec<_> = synth::generate(cfg).collect();
        synth::write_jsonl(&a.out, &docs)?
    };
    emit(&json!({"written": n, "path": a.out}))
}
