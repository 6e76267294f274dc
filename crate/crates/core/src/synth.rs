//! Seeded synthetic corpora for tests, benchmarks and demos.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use parquet::basic::{Compression, LogicalType, Repetition, Type as PhysicalType};
use parquet::data_type::{ByteArray, ByteArrayType};
use parquet::file::properties::WriterProperties;
use parquet::file::writer::SerializedFileWriter;
use parquet::schema::types::Type;
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::index::{Metadata, NewDocument};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub docs: usize,
    pub vocab_size: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// ISO 639-3 codes; documents cycle through them.
    pub languages: Vec<String>,
    /// Zipf exponent of the term distribution. 0 gives uniform terms.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs: 1_000,
            vocab_size: 5_000,
            min_tokens: 20,
            max_tokens: 200,
            languages: vec!["eng".into()],
            zipf_exponent: 1.0,
            seed: 42,
        }
    }
}

fn syllables(language: &str) -> &'static [&'static str] {
    match language {
        "fra" => &["le", "ré", "çon", "mai", "té", "ou", "èr", "pa", "vi", "sé", "an", "ch"],
        "deu" => &["ge", "über", "sch", "ün", "ei", "ß", "ka", "ter", "äh", "lin", "st", "ö"],
        "spa" => &["ca", "ño", "ra", "lo", "ci", "ón", "de", "ma", "es", "tá", "bu", "í"],
        "ara" => &["سل", "ام", "كت", "اب", "مد", "ين", "ور", "قل", "بح", "ري"],
        "rus" => &["пр", "ив", "ет", "мо", "ск", "ва", "до", "ро", "га", "ли"],
        _ => &["th", "an", "re", "on", "er", "in", "ta", "lo", "mi", "su", "ke", "po"],
    }
}

/// A deterministic list of `size` distinct pseudo-words for `language`.
pub fn vocabulary(language: &str, size: usize, seed: u64) -> Vec<String> {
    let parts = syllables(language);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fxhash(language));
    let mut seen = std::collections::HashSet::with_capacity(size);
    let mut out = Vec::with_capacity(size);
    let mut len = 2;
    let mut misses = 0;
    while out.len() < size {
        let w: String = (0..len).map(|_| parts[rng.gen_range(0..parts.len())]).collect();
        if seen.insert(w.clone()) {
            out.push(w);
            misses = 0;
        } else {
            misses += 1;
            if misses > 32 {
                len += 1;
                misses = 0;
            }
        }
    }
    out
}

fn fxhash(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x1000_0000_01b3))
}

/// Generates documents lazily; the same config always yields the same corpus.
pub struct SynthCorpus {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    vocabs: Vec<Vec<String>>,
    dist: WeightedIndex<f64>,
    next: usize,
}

impl SynthCorpus {
    pub fn new(cfg: SynthConfig) -> Self {
        assert!(cfg.vocab_size > 0, "vocabulary must not be empty");
        assert!(cfg.min_tokens <= cfg.max_tokens, "min_tokens > max_tokens");
        let languages = if cfg.languages.is_empty() {
            vec!["eng".to_owned()]
        } else {
            cfg.languages.clone()
        };
        let vocabs = languages
            .iter()
            .map(|l| vocabulary(l, cfg.vocab_size, cfg.seed))
            .collect();
        let weights: Vec<f64> = (1..=cfg.vocab_size)
            .map(|r| (r as f64).powf(-cfg.zipf_exponent))
            .collect();
        SynthCorpus {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            dist: WeightedIndex::new(weights).expect("positive weights"),
            cfg: SynthConfig { languages, ..cfg },
            vocabs,
            next: 0,
        }
    }
}

impl Iterator for SynthCorpus {
    type Item = NewDocument;

    fn next(&mut self) -> Option<NewDocument> {
        if self.next >= self.cfg.docs {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let lang_ix = i % self.cfg.languages.len();
        let vocab = &self.vocabs[lang_ix];
        let n = self.rng.gen_range(self.cfg.min_tokens..=self.cfg.max_tokens);
        let mut text = String::with_capacity(n * 8);
        for k in 0..n {
            if k > 0 {
                text.push(if k % 13 == 0 { '\n' } else { ' ' });
            }
            text.push_str(&vocab[self.dist.sample(&mut self.rng)]);
            if k % 17 == 16 {
                text.push('.');
            }
        }
        Some(NewDocument {
            external_id: Some(format!("synth-{i}")),
            text,
            metadata: Metadata {
                source: "synthetic".into(),
                language: self.cfg.languages[lang_ix].clone(),
                url: None,
            },
        })
    }
}

pub fn generate(cfg: SynthConfig) -> SynthCorpus {
    SynthCorpus::new(cfg)
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    id: Option<&'a str>,
    text: &'a str,
    source: &'a str,
    language: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    url: Option<&'a str>,
}

/// Writes documents as JSON Lines; returns the number written.
pub fn write_jsonl<'a>(
    path: &Path,
    docs: impl IntoIterator<Item = &'a NewDocument>,
) -> io::Result<usize> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for d in docs {
        serde_json::to_writer(
            &mut out,
            &JsonDoc {
                id: d.external_id.as_deref(),
                text: &d.text,
                source: &d.metadata.source,
                language: &d.metadata.language,
                url: d.metadata.url.as_deref(),
            },
        )?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

const PARQUET_COLUMNS: [&str; 5] = ["id", "text", "source", "language", "url"];

/// Writes documents as a Parquet file with string columns
/// `id, text, source, language, url`.
pub fn write_parquet(path: &Path, docs: &[NewDocument]) -> io::Result<()> {
    let to_io = |e: parquet::errors::ParquetError| io::Error::other(e);
    let fields = PARQUET_COLUMNS
        .iter()
        .map(|name| {
            let rep = if *name == "text" {
                Repetition::REQUIRED
            } else {
                Repetition::OPTIONAL
            };
            Type::primitive_type_builder(name, PhysicalType::BYTE_ARRAY)
                .with_repetition(rep)
                .with_logical_type(Some(LogicalType::String))
                .build()
                .map(Arc::new)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_io)?;
    let schema = Arc::new(
        Type::group_type_builder("document")
            .with_fields(fields)
            .build()
            .map_err(to_io)?,
    );
    let props = Arc::new(
        WriterProperties::builder()
            .set_compression(Compression::SNAPPY)
            .build(),
    );
    let mut writer = SerializedFileWriter::new(File::create(path)?, schema, props).map_err(to_io)?;
    let mut group = writer.next_row_group().map_err(to_io)?;
    for name in PARQUET_COLUMNS {
        let values: Vec<Option<&str>> = docs
            .iter()
            .map(|d| match name {
                "id" => d.external_id.as_deref(),
                "text" => Some(d.text.as_str()),
                "source" => Some(d.metadata.source.as_str()),
                "language" => Some(d.metadata.language.as_str()),
                _ => d.metadata.url.as_deref(),
            })
            .collect();
        let present: Vec<ByteArray> = values.iter().flatten().map(|s| ByteArray::from(*s)).collect();
        let mut col = group
            .next_column()
            .map_err(to_io)?
            .expect("schema has five columns");
        if name == "text" {
            col.typed::<ByteArrayType>()
                .write_batch(&present, None, None)
                .map_err(to_io)?;
        } else {
            let def: Vec<i16> = values.iter().map(|v| i16::from(v.is_some())).collect();
            col.typed::<ByteArrayType>()
                .write_batch(&present, Some(&def), None)
                .map_err(to_io)?;
        }
        col.close().map_err(to_io)?;
    }
    group.close().map_err(to_io)?;
    writer.close().map_err(to_io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let cfg = SynthConfig {
            docs: 50,
            languages: vec!["eng".into(), "fra".into(), "deu".into()],
            ..Default::default()
        };
        let a: Vec<_> = generate(cfg.clone()).collect();
        let b: Vec<_> = generate(cfg.clone()).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert_eq!(a[1].metadata.language, "fra");
        let c: Vec<_> = generate(SynthConfig { seed: 7, ..cfg }).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn vocabulary_is_distinct() {
        for lang in ["eng", "fra", "deu", "ara"] {
            let v = vocabulary(lang, 2_000, 1);
            let set: std::collections::HashSet<_> = v.iter().collect();
            assert_eq!(set.len(), 2_000, "{lang}");
        }
    }

    #[test]
    fn parquet_and_jsonl_read_back() {
        use crate::bulk::InputFiles;
        let dir = tempfile::tempdir().unwrap();
        let mut docs: Vec<NewDocument> = generate(SynthConfig { docs: 20, ..Default::default() }).collect();
        docs[3].external_id = None;
        docs[4].metadata.url = Some("https://example.org/4".into());
        let pq = dir.path().join("c.parquet");
        let jl = dir.path().join("c.jsonl");
        write_parquet(&pq, &docs).unwrap();
        assert_eq!(write_jsonl(&jl, &docs).unwrap(), 20);
        for path in [pq, jl] {
            let back: Vec<NewDocument> = InputFiles::new(vec![path])
                .map(|r| r.unwrap().unwrap())
                .collect();
            assert_eq!(back, docs);
        }
    }
}
