//! Match, match-phrase and boolean queries over an index snapshot.
//!
//! There is no scoring: results are the exact set of matching documents in
//! ascending doc id order, plus document and occurrence counts.

mod ast;
mod phrase;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::index::{DocId, Index, KeywordField, Posting, Segment, Snapshot};

pub use ast::{QueryAst, TEXT_FIELD};
pub use phrase::{phrase_positions_match, phrase_start_count};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("query text is empty after analysis")]
    EmptyQueryAfterAnalysis,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: DocId,
    pub external_id: Option<String>,
    pub matched_field: String,
    pub occurrence_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub total_docs: u64,
    pub hits: Vec<Hit>,
    /// Wall time of the search in milliseconds.
    pub took: f64,
}

/// A query with its text analyzed and its fields resolved.
#[derive(Debug, Clone)]
enum Compiled {
    All,
    AnyTerm(Vec<String>),
    Phrase { terms: Vec<String>, slop: u32 },
    Keyword(KeywordField, String),
    Bool {
        must: Vec<Compiled>,
        should: Vec<Compiled>,
        must_not: Vec<Compiled>,
        minimum_should_match: usize,
    },
}

fn compile(ast: &QueryAst, analyzer: &Analyzer) -> Result<Compiled, QueryError> {
    match ast {
        QueryAst::MatchAll {} => Ok(Compiled::All),
        QueryAst::Match { field, text } | QueryAst::MatchPhrase { field, text, .. }
            if field != TEXT_FIELD =>
        {
            KeywordField::parse(field)
                .map(|f| Compiled::Keyword(f, text.clone()))
                .ok_or_else(|| QueryError::UnknownField(field.clone()))
        }
        QueryAst::Match { text, .. } => {
            let mut terms = analyzer.terms(text);
            if terms.is_empty() {
                return Err(QueryError::EmptyQueryAfterAnalysis);
            }
            terms.sort();
            terms.dedup();
            Ok(Compiled::AnyTerm(terms))
        }
        QueryAst::MatchPhrase { text, slop, .. } => {
            let terms = analyzer.terms(text);
            if terms.is_empty() {
                return Err(QueryError::EmptyQueryAfterAnalysis);
            }
            Ok(Compiled::Phrase { terms, slop: *slop })
        }
        QueryAst::Bool {
            must,
            should,
            must_not,
            minimum_should_match,
        } => {
            if must.is_empty() && should.is_empty() && must_not.is_empty() {
                return Err(QueryError::InvalidQuery(
                    "bool query needs at least one clause".into(),
                ));
            }
            let all = |v: &[QueryAst]| {
                v.iter()
                    .map(|q| compile(q, analyzer))
                    .collect::<Result<Vec<_>, _>>()
            };
            let default_msm = if must.is_empty() { 1 } else { 0 };
            let msm = minimum_should_match.map_or(default_msm, |m| m as usize);
            if msm > should.len() && !should.is_empty() {
                return Err(QueryError::InvalidQuery(format!(
                    "minimum_should_match {msm} exceeds {} should clauses",
                    should.len()
                )));
            }
            Ok(Compiled::Bool {
                must: all(must)?,
                should: all(should)?,
                must_not: all(must_not)?,
                minimum_should_match: if should.is_empty() { 0 } else { msm },
            })
        }
    }
}

fn field_of(ast: &QueryAst) -> &str {
    match ast {
        QueryAst::MatchAll {} => "*",
        QueryAst::Match { field, .. } | QueryAst::MatchPhrase { field, .. } => field,
        QueryAst::Bool { must, should, .. } => must
            .iter()
            .chain(should)
            .map(field_of)
            .find(|f| *f != "*")
            .unwrap_or("*"),
    }
}

/// Per-segment evaluation state; decoded postings are cached per term.
struct SegmentEval<'a> {
    seg: &'a Segment,
    cache: HashMap<String, Vec<Posting>>,
}

impl<'a> SegmentEval<'a> {
    fn new(seg: &'a Segment) -> Self {
        SegmentEval {
            seg,
            cache: HashMap::new(),
        }
    }

    fn load(&mut self, term: &str) {
        if !self.cache.contains_key(term) {
            let p = self.seg.postings(term);
            self.cache.insert(term.to_owned(), p);
        }
    }

    fn postings(&self, term: &str) -> &[Posting] {
        self.cache.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    fn positions(&self, term: &str, doc: DocId) -> &[u32] {
        let list = self.postings(term);
        list.binary_search_by_key(&doc, |p| p.doc_id)
            .map(|i| list[i].positions.as_slice())
            .unwrap_or(&[])
    }

    /// Matching doc ids, ascending.
    fn docs(&mut self, q: &Compiled) -> Vec<DocId> {
        match q {
            Compiled::All => self.seg.doc_ids().collect(),
            Compiled::Keyword(field, value) => self.seg.keyword_docs(*field, value).to_vec(),
            Compiled::AnyTerm(terms) => {
                if let [term] = terms.as_slice() {
                    return self.seg.doc_ids_for(term);
                }
                let mut out: Vec<DocId> =
                    terms.iter().flat_map(|t| self.seg.doc_ids_for(t)).collect();
                out.sort_unstable();
                out.dedup();
                out
            }
            Compiled::Phrase { terms, slop } => {
                if let [term] = terms.as_slice() {
                    return self.seg.doc_ids_for(term);
                }
                self.phrase_docs(terms, *slop)
            }
            Compiled::Bool {
                must,
                should,
                must_not,
                minimum_should_match,
            } => {
                let mut base: Option<Vec<DocId>> = None;
                for clause in must {
                    let d = self.docs(clause);
                    base = Some(match base {
                        None => d,
                        Some(b) => intersect(&b, &d),
                    });
                    if base.as_ref().is_some_and(Vec::is_empty) {
                        return Vec::new();
                    }
                }
                if *minimum_should_match > 0 {
                    let mut all: Vec<DocId> = should.iter().flat_map(|c| self.docs(c)).collect();
                    all.sort_unstable();
                    let enough = at_least(&all, *minimum_should_match);
                    base = Some(match base {
                        None => enough,
                        Some(b) => intersect(&b, &enough),
                    });
                }
                let mut out = base.unwrap_or_else(|| self.seg.doc_ids().collect());
                for clause in must_not {
                    let d = self.docs(clause);
                    out = difference(&out, &d);
                }
                out
            }
        }
    }

    fn phrase_docs(&mut self, terms: &[String], slop: u32) -> Vec<DocId> {
        for t in terms {
            self.load(t);
        }
        let Some(rarest) = terms.iter().min_by_key(|t| self.postings(t).len()) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for p in self.postings(rarest) {
            let lists: Vec<&[u32]> = terms.iter().map(|t| self.positions(t, p.doc_id)).collect();
            if phrase_positions_match(&lists, slop) {
                out.push(p.doc_id);
            }
        }
        out
    }

    /// Occurrences of the positive text clauses of `q` in `doc`.
    fn occurrences(&mut self, q: &Compiled, doc: DocId) -> u64 {
        match q {
            Compiled::All | Compiled::Keyword(..) => 0,
            Compiled::AnyTerm(terms) => terms
                .iter()
                .map(|t| {
                    self.load(t);
                    self.positions(t, doc).len() as u64
                })
                .sum(),
            Compiled::Phrase { terms, slop } => {
                for t in terms {
                    self.load(t);
                }
                let lists: Vec<&[u32]> = terms.iter().map(|t| self.positions(t, doc)).collect();
                phrase_start_count(&lists, *slop) as u64
            }
            Compiled::Bool { must, should, .. } => must
                .iter()
                .chain(should)
                .map(|c| self.occurrences(c, doc))
                .sum(),
        }
    }
}

fn intersect(a: &[DocId], b: &[DocId]) -> Vec<DocId> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn difference(a: &[DocId], b: &[DocId]) -> Vec<DocId> {
    let mut j = 0;
    a.iter()
        .copied()
        .filter(|x| {
            while j < b.len() && b[j] < *x {
                j += 1;
            }
            !(j < b.len() && b[j] == *x)
        })
        .collect()
}

/// Values occurring at least `k` times in a sorted slice.
fn at_least(sorted: &[DocId], k: usize) -> Vec<DocId> {
    sorted
        .chunk_by(|a, b| a == b)
        .filter(|run| run.len() >= k)
        .map(|run| run[0])
        .collect()
}

/// Executes queries against one snapshot of an index.
#[derive(Debug, Clone)]
pub struct Searcher {
    snapshot: Arc<Snapshot>,
}

impl Searcher {
    pub fn new(snapshot: Arc<Snapshot>) -> Self {
        Searcher { snapshot }
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn doc_count(&self) -> u64 {
        self.snapshot.doc_count()
    }

    /// Checks that the query is well formed for this index.
    pub fn validate(&self, ast: &QueryAst) -> Result<(), QueryError> {
        compile(ast, self.snapshot.analyzer()).map(|_| ())
    }

    pub fn search(&self, ast: &QueryAst, limit: usize) -> Result<SearchResult, QueryError> {
        self.search_page(ast, 0, limit)
    }

    /// Matching documents `from..from + size` in doc id order, with the
    /// total match count.
    pub fn search_page(
        &self,
        ast: &QueryAst,
        from: usize,
        size: usize,
    ) -> Result<SearchResult, QueryError> {
        let started = Instant::now();
        let q = compile(ast, self.snapshot.analyzer())?;
        let field = field_of(ast).to_owned();
        let mut total = 0u64;
        let mut hits = Vec::new();
        let end = from.saturating_add(size);
        for seg in self.snapshot.segments() {
            let mut eval = SegmentEval::new(seg);
            let docs = eval.docs(&q);
            let seg_start = total as usize;
            total += docs.len() as u64;
            let lo = from.max(seg_start);
            let hi = end.min(total as usize);
            for &doc in docs.iter().take(hi.saturating_sub(seg_start)).skip(lo - seg_start) {
                hits.push(Hit {
                    doc_id: doc,
                    external_id: seg.doc(doc).and_then(|d| d.external_id.clone()),
                    matched_field: field.clone(),
                    occurrence_count: eval.occurrences(&q, doc),
                });
            }
        }
        Ok(SearchResult {
            total_docs: total,
            hits,
            took: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    pub fn count(&self, ast: &QueryAst) -> Result<u64, QueryError> {
        let q = compile(ast, self.snapshot.analyzer())?;
        Ok(self
            .snapshot
            .segments()
            .iter()
            .map(|seg| SegmentEval::new(seg).docs(&q).len() as u64)
            .sum())
    }

    /// Total occurrences of `ast` over the documents it matches, optionally
    /// restricted to documents also matching `within`. For a phrase this is
    /// the number of distinct start positions of a slop-bounded match.
    pub fn occurrence_count(
        &self,
        ast: &QueryAst,
        within: Option<&QueryAst>,
    ) -> Result<u64, QueryError> {
        let q = compile(ast, self.snapshot.analyzer())?;
        let filter = within
            .map(|w| compile(w, self.snapshot.analyzer()))
            .transpose()?;
        let mut total = 0;
        for seg in self.snapshot.segments() {
            let mut eval = SegmentEval::new(seg);
            let mut docs = eval.docs(&q);
            if let Some(f) = &filter {
                docs = intersect(&docs, &eval.docs(f));
            }
            for doc in docs {
                total += eval.occurrences(&q, doc);
            }
        }
        Ok(total)
    }

    /// Whether a specific document matches `ast`.
    pub fn matches_doc(&self, ast: &QueryAst, doc_id: DocId) -> Result<bool, QueryError> {
        let q = compile(ast, self.snapshot.analyzer())?;
        Ok(self
            .snapshot
            .segments()
            .iter()
            .find(|s| s.doc(doc_id).is_some())
            .is_some_and(|seg| SegmentEval::new(seg).docs(&q).binary_search(&doc_id).is_ok()))
    }
}

impl Index {
    /// A searcher over the last refreshed snapshot.
    pub fn searcher(&self) -> Searcher {
        Searcher::new(self.snapshot())
    }
}
