//! Sealed segments and their on-disk encoding.
//!
//! A segment is persisted as two files. The postings file (`.ftsg`):
//!
//! ```text
//! "FTSG" | version u32 | crc32 u32            (crc over everything after it)
//! segment_id u64 | doc_count u64 | raw_bytes u64
//! term_count u64 | dict_len u64 | postings_len u64
//! dictionary: term_count × (varint term_len, term bytes, offset u64)
//! postings:   per term: varint doc_count,
//!             doc_count × (varint doc_id delta, varint pos_count,
//!                          pos_count × varint position delta)
//! ```
//!
//! The document store (`.docs`):
//!
//! ```text
//! "FTSD" | version u32 | crc32 u32 | record_count u64
//! record_count × (len u64, JSON-encoded StoredDocument)
//! ```
//!
//! All fixed-width integers are little-endian.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::codec::{put_u32, put_u64, put_varint, Cursor};
use super::document::{DocId, StoredDocument};
use super::IndexError;

pub const SEGMENT_MAGIC: &[u8; 4] = b"FTSG";
pub const DOCSTORE_MAGIC: &[u8; 4] = b"FTSD";
pub const FORMAT_VERSION: u32 = 1;

const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: DocId,
    /// Strictly increasing, never empty.
    pub positions: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentInfo {
    pub segment_id: u64,
    pub doc_count: u64,
    /// Sum of the UTF-8 sizes of the source texts.
    pub raw_bytes: u64,
    /// Size of the postings file plus the document store.
    pub index_bytes: u64,
}

/// Metadata fields that can be matched exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KeywordField {
    Language,
    Source,
}

impl KeywordField {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "language" => Some(KeywordField::Language),
            "source" => Some(KeywordField::Source),
            _ => None,
        }
    }
}

/// An immutable, searchable unit of the index.
#[derive(Debug)]
pub struct Segment {
    info: SegmentInfo,
    terms: Vec<String>,
    offsets: Vec<u64>,
    postings: Vec<u8>,
    docs: Vec<StoredDocument>,
    keywords: HashMap<KeywordField, BTreeMap<String, Vec<DocId>>>,
}

pub struct EncodedSegment {
    pub postings_file: Vec<u8>,
    pub docstore_file: Vec<u8>,
}

impl EncodedSegment {
    pub fn len(&self) -> u64 {
        (self.postings_file.len() + self.docstore_file.len()) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Segment {
    /// Builds a segment from an in-memory term buffer. `docs` must be sorted
    /// by doc id and every posting must refer to one of them.
    pub fn build(
        segment_id: u64,
        buffer: HashMap<String, Vec<Posting>>,
        docs: Vec<StoredDocument>,
    ) -> Segment {
        Segment::build_encoded(segment_id, buffer, docs).0
    }

    /// Like [`Segment::build`], also returning the encoded files.
    pub fn build_encoded(
        segment_id: u64,
        buffer: HashMap<String, Vec<Posting>>,
        docs: Vec<StoredDocument>,
    ) -> (Segment, EncodedSegment) {
        debug_assert!(docs.windows(2).all(|w| w[0].doc_id < w[1].doc_id));
        let mut entries: Vec<(String, Vec<Posting>)> = buffer.into_iter().collect();
        entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
        let mut terms = Vec::with_capacity(entries.len());
        let mut offsets = Vec::with_capacity(entries.len());
        let mut postings = Vec::new();
        for (term, mut list) in entries {
            list.sort_unstable_by_key(|p| p.doc_id);
            offsets.push(postings.len() as u64);
            encode_postings(&mut postings, &list);
            terms.push(term);
        }
        let raw_bytes = docs.iter().map(|d| d.text.len() as u64).sum();
        let mut seg = Segment {
            info: SegmentInfo {
                segment_id,
                doc_count: docs.len() as u64,
                raw_bytes,
                index_bytes: 0,
            },
            terms,
            offsets,
            postings,
            keywords: build_keywords(&docs),
            docs,
        };
        let enc = seg.encode();
        seg.info.index_bytes = enc.len();
        (seg, enc)
    }

    pub fn info(&self) -> SegmentInfo {
        self.info
    }

    pub fn id(&self) -> u64 {
        self.info.segment_id
    }

    pub fn doc_count(&self) -> u64 {
        self.info.doc_count
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn docs(&self) -> &[StoredDocument] {
        &self.docs
    }

    pub fn doc(&self, doc_id: DocId) -> Option<&StoredDocument> {
        self.docs
            .binary_search_by_key(&doc_id, |d| d.doc_id)
            .ok()
            .map(|i| &self.docs[i])
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.docs.iter().map(|d| d.doc_id)
    }

    fn term_offset(&self, term: &str) -> Option<usize> {
        self.terms
            .binary_search_by(|t| t.as_bytes().cmp(term.as_bytes()))
            .ok()
            .map(|i| self.offsets[i] as usize)
    }

    /// Postings for `term`, sorted by doc id.
    pub fn postings(&self, term: &str) -> Vec<Posting> {
        match self.term_offset(term) {
            Some(off) => decode_postings(&self.postings, off)
                .expect("postings validated when the segment was built or opened"),
            None => Vec::new(),
        }
    }

    /// Doc ids containing `term`, without materializing positions.
    pub fn doc_ids_for(&self, term: &str) -> Vec<DocId> {
        let Some(off) = self.term_offset(term) else {
            return Vec::new();
        };
        let mut cur = Cursor::at(&self.postings, off);
        let n = cur.varint().unwrap_or(0);
        let mut out = Vec::with_capacity(n as usize);
        let mut doc = 0u64;
        for _ in 0..n {
            doc += cur.varint().unwrap_or(0);
            let count = cur.varint().unwrap_or(0);
            for _ in 0..count {
                cur.varint();
            }
            out.push(doc);
        }
        out
    }

    pub fn keyword_docs(&self, field: KeywordField, value: &str) -> &[DocId] {
        self.keywords
            .get(&field)
            .and_then(|m| m.get(value))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn keyword_values(&self, field: KeywordField) -> impl Iterator<Item = &str> {
        self.keywords
            .get(&field)
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
    }

    pub fn encode(&self) -> EncodedSegment {
        EncodedSegment {
            postings_file: self.encode_postings_file(),
            docstore_file: encode_docstore(&self.docs),
        }
    }

    fn encode_postings_file(&self) -> Vec<u8> {
        let mut dict = Vec::new();
        for (term, off) in self.terms.iter().zip(&self.offsets) {
            put_varint(&mut dict, term.len() as u64);
            dict.extend_from_slice(term.as_bytes());
            put_u64(&mut dict, *off);
        }
        let mut body = Vec::with_capacity(48 + dict.len() + self.postings.len());
        put_u64(&mut body, self.info.segment_id);
        put_u64(&mut body, self.info.doc_count);
        put_u64(&mut body, self.info.raw_bytes);
        put_u64(&mut body, self.terms.len() as u64);
        put_u64(&mut body, dict.len() as u64);
        put_u64(&mut body, self.postings.len() as u64);
        body.extend_from_slice(&dict);
        body.extend_from_slice(&self.postings);
        with_header(SEGMENT_MAGIC, body)
    }

    fn decode(postings_file: &[u8], docstore_file: &[u8]) -> Result<Segment, IndexError> {
        let body = check_header(SEGMENT_MAGIC, postings_file)?;
        let corrupt = |what: &str| IndexError::Corrupt(format!("segment {what}"));
        let mut cur = Cursor::new(body);
        let segment_id = cur.u64().ok_or_else(|| corrupt("header"))?;
        let doc_count = cur.u64().ok_or_else(|| corrupt("header"))?;
        let raw_bytes = cur.u64().ok_or_else(|| corrupt("header"))?;
        let term_count = cur.u64().ok_or_else(|| corrupt("header"))?;
        let dict_len = cur.u64().ok_or_else(|| corrupt("header"))? as usize;
        let postings_len = cur.u64().ok_or_else(|| corrupt("header"))? as usize;
        let dict = cur.bytes(dict_len).ok_or_else(|| corrupt("dictionary"))?;
        let postings = cur.bytes(postings_len).ok_or_else(|| corrupt("postings"))?;
        if !cur.is_empty() {
            return Err(corrupt("trailing bytes"));
        }

        let mut terms = Vec::with_capacity(term_count as usize);
        let mut offsets = Vec::with_capacity(term_count as usize);
        let mut dcur = Cursor::new(dict);
        for _ in 0..term_count {
            let len = dcur.varint().ok_or_else(|| corrupt("dictionary"))? as usize;
            let bytes = dcur.bytes(len).ok_or_else(|| corrupt("dictionary"))?;
            let term = std::str::from_utf8(bytes).map_err(|_| corrupt("term utf-8"))?;
            let off = dcur.u64().ok_or_else(|| corrupt("dictionary"))?;
            if let Some(prev) = terms.last() {
                if String::as_bytes(prev) >= term.as_bytes() {
                    return Err(corrupt("dictionary order"));
                }
            }
            decode_postings(postings, off as usize).ok_or_else(|| corrupt("postings"))?;
            terms.push(term.to_owned());
            offsets.push(off);
        }

        let docs = decode_docstore(docstore_file)?;
        if docs.len() as u64 != doc_count {
            return Err(corrupt("doc count mismatch"));
        }
        let seg = Segment {
            info: SegmentInfo {
                segment_id,
                doc_count,
                raw_bytes,
                index_bytes: (postings_file.len() + docstore_file.len()) as u64,
            },
            terms,
            offsets,
            postings: postings.to_vec(),
            keywords: build_keywords(&docs),
            docs,
        };
        Ok(seg)
    }
}

fn build_keywords(docs: &[StoredDocument]) -> HashMap<KeywordField, BTreeMap<String, Vec<DocId>>> {
    let mut language: BTreeMap<String, Vec<DocId>> = BTreeMap::new();
    let mut source: BTreeMap<String, Vec<DocId>> = BTreeMap::new();
    for d in docs {
        language
            .entry(d.metadata.language.clone())
            .or_default()
            .push(d.doc_id);
        source
            .entry(d.metadata.source.clone())
            .or_default()
            .push(d.doc_id);
    }
    HashMap::from([(KeywordField::Language, language), (KeywordField::Source, source)])
}

fn encode_postings(buf: &mut Vec<u8>, list: &[Posting]) {
    put_varint(buf, list.len() as u64);
    let mut prev_doc = 0;
    for p in list {
        put_varint(buf, p.doc_id - prev_doc);
        prev_doc = p.doc_id;
        put_varint(buf, p.positions.len() as u64);
        let mut prev_pos = 0;
        for &pos in &p.positions {
            put_varint(buf, u64::from(pos - prev_pos));
            prev_pos = pos;
        }
    }
}

fn decode_postings(data: &[u8], offset: usize) -> Option<Vec<Posting>> {
    let mut cur = Cursor::at(data, offset);
    let n = cur.varint()?;
    let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
    let mut doc = 0u64;
    for i in 0..n {
        let delta = cur.varint()?;
        if i > 0 && delta == 0 {
            return None;
        }
        doc = doc.checked_add(delta)?;
        let count = cur.varint()?;
        if count == 0 {
            return None;
        }
        let mut positions = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut pos = 0u64;
        for j in 0..count {
            let d = cur.varint()?;
            if j > 0 && d == 0 {
                return None;
            }
            pos += d;
            positions.push(u32::try_from(pos).ok()?);
        }
        out.push(Posting {
            doc_id: doc,
            positions,
        });
    }
    Some(out)
}

fn with_header(magic: &[u8; 4], body: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(magic);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, crc32fast::hash(&body));
    out.extend_from_slice(&body);
    out
}

fn check_header<'a>(magic: &[u8; 4], data: &'a [u8]) -> Result<&'a [u8], IndexError> {
    let mut cur = Cursor::new(data);
    if cur.bytes(4) != Some(magic.as_slice()) {
        return Err(IndexError::BadMagic);
    }
    let version = cur
        .u32()
        .ok_or_else(|| IndexError::Corrupt("truncated header".into()))?;
    if version != FORMAT_VERSION {
        return Err(IndexError::UnsupportedVersion(version));
    }
    let expected = cur
        .u32()
        .ok_or_else(|| IndexError::Corrupt("truncated header".into()))?;
    let body = &data[HEADER_LEN..];
    if crc32fast::hash(body) != expected {
        return Err(IndexError::Corrupt("checksum mismatch".into()));
    }
    Ok(body)
}

pub fn encode_docstore(docs: &[StoredDocument]) -> Vec<u8> {
    let mut body = Vec::new();
    put_u64(&mut body, docs.len() as u64);
    for d in docs {
        let rec = serde_json::to_vec(d).expect("stored documents serialize");
        put_u64(&mut body, rec.len() as u64);
        body.extend_from_slice(&rec);
    }
    with_header(DOCSTORE_MAGIC, body)
}

pub fn decode_docstore(data: &[u8]) -> Result<Vec<StoredDocument>, IndexError> {
    let body = check_header(DOCSTORE_MAGIC, data)?;
    let corrupt = || IndexError::Corrupt("document store record".into());
    let mut cur = Cursor::new(body);
    let n = cur.u64().ok_or_else(corrupt)?;
    let mut docs = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let len = cur.u64().ok_or_else(corrupt)? as usize;
        let rec = cur.bytes(len).ok_or_else(corrupt)?;
        let doc: StoredDocument = serde_json::from_slice(rec).map_err(|_| corrupt())?;
        if docs.last().is_some_and(|p: &StoredDocument| p.doc_id >= doc.doc_id) {
            return Err(corrupt());
        }
        docs.push(doc);
    }
    if !cur.is_empty() {
        return Err(corrupt());
    }
    Ok(docs)
}

pub fn docstore_path(segment_path: &Path) -> PathBuf {
    segment_path.with_extension("docs")
}

/// Writes the postings file at `path` and the document store next to it.
/// Returns the number of bytes written across both files.
pub fn write_segment(segment: &Segment, path: &Path) -> Result<u64, IndexError> {
    let enc = segment.encode();
    write_encoded(&enc, path)?;
    Ok(enc.len())
}

pub(crate) fn write_encoded(enc: &EncodedSegment, path: &Path) -> Result<(), IndexError> {
    write_atomic(path, &enc.postings_file)?;
    write_atomic(&docstore_path(path), &enc.docstore_file)?;
    Ok(())
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IndexError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn open_segment(path: &Path) -> Result<Segment, IndexError> {
    let postings = fs::read(path)?;
    let docs = fs::read(docstore_path(path))?;
    Segment::decode(&postings, &docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::Analyzer;
    use crate::index::document::{content_hash, Metadata, NewDocument};

    fn build(texts: &[&str]) -> Segment {
        let analyzer = Analyzer::default();
        let mut buffer: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut docs = Vec::new();
        for (i, text) in texts.iter().enumerate() {
            let a = NewDocument::new(*text).analyze(&analyzer);
            for (term, positions) in a.terms {
                buffer.entry(term).or_default().push(Posting {
                    doc_id: i as u64,
                    positions,
                });
            }
            docs.push(StoredDocument {
                doc_id: i as u64,
                external_id: Some(format!("ext-{i}")),
                text: text.to_string(),
                metadata: Metadata::default(),
                content_hash: content_hash(text),
                token_count: a.token_count,
            });
        }
        Segment::build(1, buffer, docs)
    }

    #[test]
    fn roundtrip_three_docs() {
        let seg = build(&["the cat sat", "cat", "dog and cat and cat"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.ftsg");
        let written = write_segment(&seg, &path).unwrap();
        assert_eq!(written, seg.info().index_bytes);
        let on_disk = fs::metadata(&path).unwrap().len() + fs::metadata(docstore_path(&path)).unwrap().len();
        assert_eq!(on_disk, written);

        let back = open_segment(&path).unwrap();
        assert_eq!(back.info(), seg.info());
        assert_eq!(back.terms(), seg.terms());
        for t in seg.terms() {
            assert_eq!(back.postings(t), seg.postings(t));
        }
        assert_eq!(back.docs(), seg.docs());
        assert_eq!(
            back.postings("cat"),
            vec![
                Posting { doc_id: 0, positions: vec![1] },
                Posting { doc_id: 1, positions: vec![0] },
                Posting { doc_id: 2, positions: vec![2, 4] },
            ]
        );
        assert_eq!(back.doc_ids_for("cat"), vec![0, 1, 2]);
        assert!(back.postings("missing").is_empty());
    }

    #[test]
    fn dictionary_is_sorted_by_bytes() {
        let seg = build(&["zeta Alpha beta éclair"]);
        let t = seg.terms();
        assert!(t.windows(2).all(|w| w[0].as_bytes() < w[1].as_bytes()));
    }

    #[test]
    fn rejects_bad_magic_version_and_checksum() {
        let seg = build(&["one two", "three"]);
        let enc = seg.encode();

        let mut bad = enc.postings_file.clone();
        bad[0] = b'X';
        assert!(matches!(Segment::decode(&bad, &enc.docstore_file), Err(IndexError::BadMagic)));

        let mut bad = enc.postings_file.clone();
        bad[4] = 2;
        assert!(matches!(
            Segment::decode(&bad, &enc.docstore_file),
            Err(IndexError::UnsupportedVersion(2))
        ));

        let mut bad = enc.postings_file.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0x55;
        assert!(matches!(Segment::decode(&bad, &enc.docstore_file), Err(IndexError::Corrupt(_))));

        let mut bad = enc.docstore_file.clone();
        bad[20] ^= 1;
        assert!(matches!(Segment::decode(&enc.postings_file, &bad), Err(IndexError::Corrupt(_))));

        assert!(matches!(Segment::decode(b"FTS", &enc.docstore_file), Err(IndexError::BadMagic)));
    }

    #[test]
    fn keyword_lookup() {
        let analyzer = Analyzer::default();
        let mut docs = Vec::new();
        let mut buffer: HashMap<String, Vec<Posting>> = HashMap::new();
        for (i, lang) in ["eng", "fra", "eng"].iter().enumerate() {
            let a = NewDocument::new("x").with_language(*lang).analyze(&analyzer);
            buffer.entry("x".into()).or_default().push(Posting { doc_id: i as u64, positions: vec![0] });
            docs.push(StoredDocument {
                doc_id: i as u64,
                external_id: None,
                text: a.doc.text,
                metadata: a.doc.metadata,
                content_hash: a.hash,
                token_count: 1,
            });
        }
        let seg = Segment::build(3, buffer, docs);
        assert_eq!(seg.keyword_docs(KeywordField::Language, "eng"), &[0, 2]);
        assert_eq!(seg.keyword_docs(KeywordField::Language, "deu"), &[] as &[u64]);
        assert_eq!(seg.keyword_values(KeywordField::Language).collect::<Vec<_>>(), vec!["eng", "fra"]);
    }
}
