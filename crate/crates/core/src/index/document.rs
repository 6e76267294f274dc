use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::IndexError;
use crate::analysis::Analyzer;

pub type DocId = u64;

/// Language code used for documents that carry no language metadata.
pub const UNDETERMINED_LANGUAGE: &str = "und";

pub type ContentHash = [u8; 32];

/// SHA-256 over the UTF-8 bytes of `text`.
pub fn content_hash(text: &str) -> ContentHash {
    Sha256::digest(text.as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub source: String,
    /// ISO 639-3 code.
    #[serde(default = "undetermined")]
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

fn undetermined() -> String {
    UNDETERMINED_LANGUAGE.to_owned()
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            source: String::new(),
            language: undetermined(),
            url: None,
        }
    }
}

/// A document before it has been assigned an id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NewDocument {
    pub external_id: Option<String>,
    pub text: String,
    pub metadata: Metadata,
}

impl NewDocument {
    pub fn new(text: impl Into<String>) -> Self {
        NewDocument {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn from_bytes(
        external_id: Option<String>,
        text: Vec<u8>,
        metadata: Metadata,
    ) -> Result<Self, IndexError> {
        let text = String::from_utf8(text).map_err(|e| IndexError::InvalidUtf8 {
            valid_up_to: e.utf8_error().valid_up_to(),
        })?;
        Ok(NewDocument {
            external_id,
            text,
            metadata,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.external_id = Some(id.into());
        self
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.metadata.language = language.into();
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.metadata.source = source.into();
        self
    }

    /// Hashes and analyzes the document. This is the CPU-heavy part of
    /// ingestion and needs no access to the index.
    pub fn analyze(self, analyzer: &Analyzer) -> AnalyzedDocument {
        let hash = content_hash(&self.text);
        let tokens = analyzer.analyze(&self.text);
        let token_count = tokens.len() as u32;
        let mut by_term: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for t in tokens {
            by_term.entry(t.term).or_default().push(t.position);
        }
        AnalyzedDocument {
            doc: self,
            hash,
            token_count,
            terms: by_term.into_iter().collect(),
        }
    }
}

/// A document with its content hash and per-term positions.
#[derive(Debug, Clone)]
pub struct AnalyzedDocument {
    pub doc: NewDocument,
    pub hash: ContentHash,
    pub token_count: u32,
    pub terms: Vec<(String, Vec<u32>)>,
}

/// A document as held in the document store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDocument {
    pub doc_id: DocId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_id: Option<String>,
    pub text: String,
    #[serde(flatten)]
    pub metadata: Metadata,
    #[serde(with = "hex_digest")]
    pub content_hash: ContentHash,
    pub token_count: u32,
}

mod hex_digest {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&s, &mut out).map_err(D::Error::custom)?;
        Ok(out)
    }
}
