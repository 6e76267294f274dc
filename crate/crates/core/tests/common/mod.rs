//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use corpusdex::analysis::Analyzer;
use corpusdex::index::NewDocument;
use corpusdex::query::{QueryAst, TEXT_FIELD};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct OracleDoc {
    pub tokens: Vec<String>,
    pub language: String,
    pub source: String,
}

/// Full-scan evaluator. Document `i` of the oracle corresponds to the i-th
/// document added to a fresh index.
pub struct Oracle {
    pub docs: Vec<OracleDoc>,
    analyzer: Analyzer,
}

/// Start positions `p1` from which the phrase can be completed in order with
/// at most `slop` intervening tokens, by exhaustive search.
pub fn phrase_starts(tokens: &[String], phrase: &[String], slop: u32) -> BTreeSet<usize> {
    fn extend(tokens: &[String], phrase: &[String], at: usize, prev: usize, budget: i64) -> bool {
        if at == phrase.len() {
            return true;
        }
        (prev + 1..tokens.len()).any(|p| {
            let gap = (p - prev - 1) as i64;
            gap <= budget && tokens[p] == phrase[at] && extend(tokens, phrase, at + 1, p, budget - gap)
        })
    }
    (0..tokens.len())
        .filter(|&s| tokens[s] == phrase[0] && extend(tokens, phrase, 1, s, i64::from(slop)))
        .collect()
}

impl Oracle {
    pub fn new(analyzer: Analyzer) -> Self {
        Oracle { docs: Vec::new(), analyzer }
    }

    pub fn add(&mut self, doc: &NewDocument) {
        self.docs.push(OracleDoc {
            tokens: self.analyzer.terms(&doc.text),
            language: doc.metadata.language.clone(),
            source: doc.metadata.source.clone(),
        });
    }

    pub fn from_docs<'a>(analyzer: Analyzer, docs: impl IntoIterator<Item = &'a NewDocument>) -> Self {
        let mut o = Oracle::new(analyzer);
        for d in docs {
            o.add(d);
        }
        o
    }

    fn keyword(doc: &OracleDoc, field: &str, value: &str) -> bool {
        match field {
            "language" => doc.language == value,
            "source" => doc.source == value,
            other => panic!("oracle: unknown field {other}"),
        }
    }

    pub fn matches(&self, q: &QueryAst, i: usize) -> bool {
        let doc = &self.docs[i];
        match q {
            QueryAst::MatchAll {} => true,
            QueryAst::Match { field, text } | QueryAst::MatchPhrase { field, text, .. } if field != TEXT_FIELD => {
                Self::keyword(doc, field, text)
            }
            QueryAst::Match { text, .. } => {
                let terms = self.analyzer.terms(text);
                doc.tokens.iter().any(|t| terms.contains(t))
            }
            QueryAst::MatchPhrase { text, slop, .. } => {
                let terms = self.analyzer.terms(text);
                !phrase_starts(&doc.tokens, &terms, *slop).is_empty()
            }
            QueryAst::Bool {
                must,
                should,
                must_not,
                minimum_should_match,
            } => {
                let msm = minimum_should_match.unwrap_or(if must.is_empty() { 1 } else { 0 }) as usize;
                let msm = if should.is_empty() { 0 } else { msm };
                must.iter().all(|c| self.matches(c, i))
                    && should.iter().filter(|c| self.matches(c, i)).count() >= msm
                    && !must_not.iter().any(|c| self.matches(c, i))
            }
        }
    }

    /// Occurrences of the positive text clauses in one document.
    pub fn occurrences(&self, q: &QueryAst, i: usize) -> u64 {
        let doc = &self.docs[i];
        match q {
            QueryAst::MatchAll {} => 0,
            QueryAst::Match { field, .. } | QueryAst::MatchPhrase { field, .. } if field != TEXT_FIELD => 0,
            QueryAst::Match { text, .. } => {
                let terms: BTreeSet<String> = self.analyzer.terms(text).into_iter().collect();
                doc.tokens.iter().filter(|t| terms.contains(*t)).count() as u64
            }
            QueryAst::MatchPhrase { text, slop, .. } => {
                let terms = self.analyzer.terms(text);
                phrase_starts(&doc.tokens, &terms, *slop).len() as u64
            }
            QueryAst::Bool { must, should, .. } => must.iter().chain(should).map(|c| self.occurrences(c, i)).sum(),
        }
    }

    pub fn doc_ids(&self, q: &QueryAst) -> Vec<u64> {
        (0..self.docs.len()).filter(|&i| self.matches(q, i)).map(|i| i as u64).collect()
    }

    pub fn count(&self, q: &QueryAst) -> u64 {
        (0..self.docs.len()).filter(|&i| self.matches(q, i)).count() as u64
    }

    pub fn occurrence_count(&self, q: &QueryAst, within: Option<&QueryAst>) -> u64 {
        (0..self.docs.len())
            .filter(|&i| self.matches(q, i) && within.map_or(true, |w| self.matches(w, i)))
            .map(|i| self.occurrences(q, i))
            .sum()
    }
}

/// `w0 .. w{n-1}`.
pub fn small_vocab(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

pub fn random_text(rng: &mut ChaCha8Rng, vocab: &[String], min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    (0..n).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
}

/// A random match, phrase or bool query over `vocab`.
pub fn random_query(rng: &mut ChaCha8Rng, vocab: &[String], languages: &[&str]) -> QueryAst {
    let phrase = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=5);
        let text = (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ");
        QueryAst::phrase(text, rng.gen_range(0..=3))
    };
    let matches = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=3);
        QueryAst::matches((0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" "))
    };
    match rng.gen_range(0..4) {
        0 => matches(rng),
        1 => phrase(rng),
        2 => {
            let should: Vec<QueryAst> = (0..rng.gen_range(1..=3)).map(|_| phrase(rng)).collect();
            let msm = rng.gen_range(1..=should.len() as u32);
            QueryAst::Bool {
                must: vec![matches(rng)],
                should,
                must_not: vec![],
                minimum_should_match: Some(msm),
            }
        }
        _ => {
            let mut must = vec![phrase(rng)];
            if !languages.is_empty() && rng.gen_bool(0.5) {
                must.push(QueryAst::keyword("language", *languages.choose(rng).unwrap()));
            }
            QueryAst::Bool {
                must,
                should: vec![],
                must_not: vec![matches(rng)],
                minimum_should_match: None,
            }
        }
    }
}

pub fn quiet_logs() {
    let _ = env_logger::Builder::new().filter_level(log::LevelFilter::Error).is_test(true).try_init();
}

/// Prints one verdict line per criterion, then fails the test if needed.
/// Writes to the process stdout so the line survives output capture.
pub fn verdict(name: &str, ok: bool, detail: impl AsRef<str>) {
    use std::io::Write;
    let line = format!("{} {name}: {}\n", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{name} failed: {}", detail.as_ref());
}
