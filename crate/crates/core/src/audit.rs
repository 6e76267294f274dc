//! Term-list audits: per-language document and occurrence counts for
//! dictionaries of words and short phrases.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::query::QueryAst;
use crate::shard::CountSource;

/// Dictionary language meaning "audit every language in the index".
pub const ALL_LANGUAGES: &str = "*";
pub const DEFAULT_MAX_TERM_WORDS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("dictionary {0} contains no terms")]
    EmptyDictionary(PathBuf),
    #[error("malformed CSV at line {line}: {message}")]
    MalformedCsv { line: u64, message: String },
    #[error("term {term:?} has {words} words, more than {max}")]
    TermTooLong { term: String, words: usize, max: usize },
    #[error("language {0:?} is not in the report")]
    UnknownLanguage(String),
    #[error("report is empty")]
    EmptyReport,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictFormat {
    /// One term per line, `#` comments.
    Lines,
    /// Rows `language,term`; an optional header row is skipped.
    Csv,
}

impl DictFormat {
    pub fn detect(path: &Path) -> DictFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DictFormat::Csv,
            _ => DictFormat::Lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermDictionary {
    pub name: String,
    /// ISO 639-3 code, or `*` for every language present.
    pub language: String,
    pub terms: Vec<String>,
    pub provenance: String,
}

impl TermDictionary {
    /// Builds a dictionary, dropping blank terms and terms whose analyzed
    /// form repeats an earlier one.
    pub fn new(
        name: impl Into<String>,
        language: impl Into<String>,
        terms: impl IntoIterator<Item = impl AsRef<str>>,
        analyzer: &Analyzer,
        max_words: usize,
    ) -> Result<Self, AuditError> {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for raw in terms {
            let term = raw.as_ref().trim();
            let analyzed = analyzer.terms(term);
            if analyzed.is_empty() {
                continue;
            }
            if analyzed.len() > max_words {
                return Err(AuditError::TermTooLong {
                    term: term.to_owned(),
                    words: analyzed.len(),
                    max: max_words,
                });
            }
            if seen.insert(analyzed.join(" ")) {
                kept.push(term.to_owned());
            }
        }
        Ok(TermDictionary {
            name: name.into(),
            language: language.into(),
            terms: kept,
            provenance: String::new(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct DictOptions {
    pub name: Option<String>,
    /// Language of a `Lines` dictionary.
    pub language: String,
    pub max_words: usize,
    pub provenance: String,
}

impl Default for DictOptions {
    fn default() -> Self {
        DictOptions {
            name: None,
            language: ALL_LANGUAGES.to_owned(),
            max_words: DEFAULT_MAX_TERM_WORDS,
            provenance: String::new(),
        }
    }
}

/// Reads a dictionary file. A CSV file yields one dictionary per language,
/// in order of first appearance; a lines file yields exactly one.
pub fn load_dictionary(
    path: &Path,
    format: DictFormat,
    analyzer: &Analyzer,
    opts: &DictOptions,
) -> Result<Vec<TermDictionary>, AuditError> {
    let name = opts.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dictionary".to_owned())
    });
    let text = std::fs::read_to_string(path)?;
    let groups: Vec<(String, Vec<String>)> = match format {
        DictFormat::Lines => vec![(
            opts.language.clone(),
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_owned)
                .collect(),
        )],
        DictFormat::Csv => csv_groups(&text)?,
    };
    let mut out = Vec::new();
    for (language, terms) in groups {
        let mut dict = TermDictionary::new(name.clone(), language, terms, analyzer, opts.max_words)?;
        if !dict.terms.is_empty() {
            dict.provenance = opts.provenance.clone();
            out.push(dict);
        }
    }
    if out.is_empty() {
        return Err(AuditError::EmptyDictionary(path.to_owned()));
    }
    Ok(out)
}

fn csv_groups(text: &str) -> Result<Vec<(String, Vec<String>)>, AuditError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut groups: Vec<(String, Vec<String>)> = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| AuditError::MalformedCsv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if std::mem::take(&mut first) && rec.len() == 2 && &rec[0] == "language" && &rec[1] == "term" {
            continue;
        }
        if rec.len() != 2 || rec[0].is_empty() {
            return Err(AuditError::MalformedCsv {
                line,
                message: format!("expected `language,term`, got {} fields", rec.len()),
            });
        }
        let (lang, term) = (&rec[0], &rec[1]);
        match groups.iter_mut().find(|(l, _)| l == lang) {
            Some((_, terms)) => terms.push(term.to_owned()),
            None => groups.push((lang.to_owned(), vec![term.to_owned()])),
        }
    }
    Ok(groups)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCount {
    pub language: String,
    pub term: String,
    pub doc_count: u64,
    pub occurrence_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTotal {
    pub language: String,
    /// Documents in this language containing at least one term.
    pub docs_with_any_term: u64,
    pub docs_in_language: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditMeta {
    pub index_id: String,
    pub slop: u32,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub dictionaries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub meta: AuditMeta,
    pub terms: Vec<TermCount>,
    pub languages: Vec<LanguageTotal>,
}

impl AuditReport {
    pub fn cell(&self, language: &str, term: &str) -> Option<&TermCount> {
        self.terms
            .iter()
            .find(|t| t.language == language && t.term == term)
    }

    pub fn total(&self, language: &str) -> Option<&LanguageTotal> {
        self.languages.iter().find(|l| l.language == language)
    }
}

fn language_scope(language: &str) -> QueryAst {
    QueryAst::keyword("language", language)
}

/// Counts every dictionary term per language. Per-term query failures are
/// recorded in the report and do not abort the audit.
pub fn run_audit(
    source: &dyn CountSource,
    dictionaries: &[TermDictionary],
    slop: u32,
    index_id: &str,
) -> AuditReport {
    let present = source.languages();
    let mut per_language: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for dict in dictionaries {
        let langs: Vec<String> = if dict.language == ALL_LANGUAGES {
            present.clone()
        } else {
            vec![dict.language.clone()]
        };
        for lang in langs {
            let terms = per_language.entry(lang).or_default();
            for t in &dict.terms {
                if !terms.contains(t) {
                    terms.push(t.clone());
                }
            }
        }
    }
    let cells: Vec<(&String, &String)> = per_language
        .iter()
        .flat_map(|(l, terms)| terms.iter().map(move |t| (l, t)))
        .collect();
    let terms = cells
        .par_iter()
        .map(|&(language, term)| {
            let scope = language_scope(language);
            let phrase = QueryAst::phrase(term.clone(), slop);
            let counted = source
                .count(&QueryAst::must(vec![phrase.clone(), scope.clone()]))
                .and_then(|d| Ok((d, source.occurrence_count(&phrase, Some(&scope))?)));
            let (doc_count, occurrence_count, error) = match counted {
                Ok((d, o)) => (d, o, None),
                Err(e) => (0, 0, Some(e.to_string())),
            };
            TermCount {
                language: language.clone(),
                term: term.clone(),
                doc_count,
                occurrence_count,
                error,
            }
        })
        .collect();
    let languages = per_language
        .par_iter()
        .map(|(language, terms)| {
            let scope = language_scope(language);
            let any = QueryAst::Bool {
                must: vec![scope.clone()],
                should: terms.iter().map(|t| QueryAst::phrase(t.clone(), slop)).collect(),
                must_not: Vec::new(),
                minimum_should_match: Some(1),
            };
            LanguageTotal {
                language: language.clone(),
                docs_with_any_term: source.count(&any).unwrap_or(0),
                docs_in_language: source.count(&scope).unwrap_or(0),
            }
        })
        .collect();
    AuditReport {
        meta: AuditMeta {
            index_id: index_id.to_owned(),
            slop,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            dictionaries: dictionaries.iter().map(|d| d.name.clone()).collect(),
        },
        terms,
        languages,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    DocCount,
    OccurrenceCount,
}

impl Measure {
    fn of(self, t: &TermCount) -> u64 {
        match self {
            Measure::DocCount => t.doc_count,
            Measure::OccurrenceCount => t.occurrence_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankedTerm {
    pub term: String,
    pub value: u64,
}

/// The `k` highest-ranked terms of a language, ties broken by term.
pub fn top_k(
    report: &AuditReport,
    language: &str,
    k: usize,
    by: Measure,
) -> Result<Vec<RankedTerm>, AuditError> {
    if report.total(language).is_none() {
        return Err(AuditError::UnknownLanguage(language.to_owned()));
    }
    let mut ranked: Vec<RankedTerm> = report
        .terms
        .iter()
        .filter(|t| t.language == language)
        .map(|t| RankedTerm {
            term: t.term.clone(),
            value: by.of(t),
        })
        .collect();
    ranked.sort_by(|a, b| b.value.cmp(&a.value).then_with(|| a.term.cmp(&b.term)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Long form: `language,term,doc_count,occurrence_count`.
    Csv,
    Json,
    /// One row per language, one column per term.
    HeatmapCsv(Measure),
}

pub fn export_report(report: &AuditReport, format: ExportFormat, path: &Path) -> Result<(), AuditError> {
    if report.terms.is_empty() {
        return Err(AuditError::EmptyReport);
    }
    let mut out = BufWriter::new(File::create(path)?);
    write_report(report, format, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_report<W: Write>(report: &AuditReport, format: ExportFormat, out: W) -> Result<(), AuditError> {
    match format {
        ExportFormat::Json => serde_json::to_writer_pretty(out, report).map_err(io::Error::other)?,
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["language", "term", "doc_count", "occurrence_count"])
                .map_err(io::Error::other)?;
            for t in &report.terms {
                w.write_record([
                    t.language.as_str(),
                    t.term.as_str(),
                    &t.doc_count.to_string(),
                    &t.occurrence_count.to_string(),
                ])
                .map_err(io::Error::other)?;
            }
            w.flush()?;
        }
        ExportFormat::HeatmapCsv(measure) => {
            let (languages, columns, matrix) = heatmap(report, measure);
            let mut w = csv::Writer::from_writer(out);
            let header: Vec<&str> = std::iter::once("language").chain(columns.iter().map(String::as_str)).collect();
            w.write_record(&header).map_err(io::Error::other)?;
            for (lang, row) in languages.iter().zip(matrix) {
                let cells = std::iter::once(lang.clone())
                    .chain(row.into_iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()));
                w.write_record(cells).map_err(io::Error::other)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Language × term matrix. Cells are `None` only where a term was not
/// audited for that language; audited zeros are kept.
pub fn heatmap(report: &AuditReport, measure: Measure) -> (Vec<String>, Vec<String>, Vec<Vec<Option<u64>>>) {
    let languages: Vec<String> = report.languages.iter().map(|l| l.language.clone()).collect();
    let mut columns: Vec<String> = Vec::new();
    for t in &report.terms {
        if !columns.contains(&t.term) {
            columns.push(t.term.clone());
        }
    }
    let matrix = languages
        .iter()
        .map(|l| columns.iter().map(|c| report.cell(l, c).map(|t| measure.of(t))).collect())
        .collect();
    (languages, columns, matrix)
}

pub fn load_report_json(path: &Path) -> Result<AuditReport, AuditError> {
    let f = File::open(path)?;
    serde_json::from_reader(io::BufReader::new(f))
        .map_err(|e| AuditError::Io(io::Error::new(io::ErrorKind::InvalidData, e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::AnalyzerConfig;
    use crate::index::{Index, NewDocument};

    fn analyzer() -> Analyzer {
        Analyzer::new(AnalyzerConfig::default())
    }

    fn index(docs: &[(&str, &str)]) -> Index {
        let index = Index::in_memory(AnalyzerConfig::default());
        for (lang, text) in docs {
            index.add_document(NewDocument::new(*text).with_language(*lang), false).unwrap();
        }
        index.refresh().unwrap();
        index
    }

    #[test]
    fn worked_example() {
        let idx = index(&[("eng", "x bad y"), ("eng", "clean"), ("eng", "bad bad")]);
        let dict = TermDictionary::new("d", "eng", ["bad", "absent"], &analyzer(), 5).unwrap();
        let r = run_audit(&idx.searcher(), &[dict], 0, "t");
        let bad = r.cell("eng", "bad").unwrap();
        assert_eq!((bad.doc_count, bad.occurrence_count), (2, 3));
        let absent = r.cell("eng", "absent").unwrap();
        assert_eq!((absent.doc_count, absent.occurrence_count), (0, 0));
        assert_eq!(r.total("eng").unwrap().docs_with_any_term, 2);
    }

    #[test]
    fn languages_are_scoped_and_phrases_adjacent() {
        let idx = index(&[
            ("eng", "very bad word here"),
            ("eng", "bad and word"),
            ("fra", "very bad word"),
        ]);
        let dict = TermDictionary::new("d", "*", ["bad word"], &analyzer(), 5).unwrap();
        let r = run_audit(&idx.searcher(), std::slice::from_ref(&dict), 0, "t");
        assert_eq!(r.cell("eng", "bad word").unwrap().doc_count, 1);
        assert_eq!(r.cell("fra", "bad word").unwrap().doc_count, 1);
        let wide = run_audit(&idx.searcher(), &[dict], 1, "t");
        assert_eq!(wide.cell("eng", "bad word").unwrap().doc_count, 2);
        assert_eq!(wide.languages.len(), 2);
    }

    #[test]
    fn load_lines_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let lines = dir.path().join("words.txt");
        std::fs::write(&lines, "# header\nFoo\n\nfoo\n  bar baz \n").unwrap();
        let d = load_dictionary(&lines, DictFormat::Lines, &analyzer(), &DictOptions::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].terms, vec!["Foo", "bar baz"]);
        assert_eq!(d[0].name, "words");

        let csv_path = dir.path().join("multi.csv");
        std::fs::write(&csv_path, "language,term\neng,cat\nfra,chat\neng,Cat\n").unwrap();
        let d = load_dictionary(&csv_path, DictFormat::detect(&csv_path), &analyzer(), &DictOptions::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].language.as_str(), d[0].terms.len()), ("eng", 1));

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "eng,cat\nonly_one_field\n").unwrap();
        assert!(matches!(
            load_dictionary(&bad, DictFormat::Csv, &analyzer(), &DictOptions::default()),
            Err(AuditError::MalformedCsv { line: 2, .. })
        ));

        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "\n# only a comment\n").unwrap();
        assert!(matches!(
            load_dictionary(&empty, DictFormat::Lines, &analyzer(), &DictOptions::default()),
            Err(AuditError::EmptyDictionary(_))
        ));
        assert!(matches!(
            TermDictionary::new("d", "eng", ["a b c d e f"], &analyzer(), 5),
            Err(AuditError::TermTooLong { words: 6, .. })
        ));
    }

    #[test]
    fn top_k_ties_and_unknown_language() {
        let idx = index(&[("eng", "b a c"), ("eng", "a b"), ("eng", "c")]);
        let dict = TermDictionary::new("d", "eng", ["c", "b", "a", "z"], &analyzer(), 5).unwrap();
        let r = run_audit(&idx.searcher(), &[dict], 0, "t");
        let top = top_k(&r, "eng", 10, Measure::DocCount).unwrap();
        let names: Vec<_> = top.iter().map(|t| t.term.as_str()).collect();
        assert_eq!(names, ["a", "b", "c", "z"]);
        assert_eq!(top_k(&r, "eng", 2, Measure::OccurrenceCount).unwrap().len(), 2);
        assert!(matches!(top_k(&r, "deu", 1, Measure::DocCount), Err(AuditError::UnknownLanguage(_))));
    }

    #[test]
    fn exports() {
        let idx = index(&[("eng", "a b"), ("fra", "c"), ("fra", "a")]);
        let dict = TermDictionary::new("d", "*", ["a", "b", "c"], &analyzer(), 5).unwrap();
        let r = run_audit(&idx.searcher(), &[dict], 0, "t");
        let dir = tempfile::tempdir().unwrap();
        let heat = dir.path().join("h.csv");
        export_report(&r, ExportFormat::HeatmapCsv(Measure::DocCount), &heat).unwrap();
        let text = std::fs::read_to_string(&heat).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows, ["language,a,b,c", "eng,1,1,0", "fra,1,0,1"]);
        let long = dir.path().join("l.csv");
        export_report(&r, ExportFormat::Csv, &long).unwrap();
        let text = std::fs::read_to_string(&long).unwrap();
        assert_eq!(text.lines().next().unwrap(), "language,term,doc_count,occurrence_count");
        assert_eq!(text.lines().count(), 7);
        let json = dir.path().join("r.json");
        export_report(&r, ExportFormat::Json, &json).unwrap();
        assert_eq!(load_report_json(&json).unwrap(), r);
    }
}
