//! Streaming document readers for JSON Lines (optionally gzip-compressed)
//! and Parquet files.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use parquet::file::reader::SerializedFileReader;
use parquet::record::reader::RowIter;
use parquet::record::{Field, Row};
use serde::Deserialize;

use crate::index::{Metadata, NewDocument, UNDETERMINED_LANGUAGE};

/// A record that could not be turned into a document. Never fatal.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RecordError {
    /// `path:line` or `path#row`.
    pub location: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot read input {path}: {source}")]
pub struct InputUnreadable {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub type Record = Result<NewDocument, RecordError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    JsonLines,
    GzipJsonLines,
    Parquet,
}

impl InputFormat {
    pub fn detect(path: &Path) -> InputFormat {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".parquet") || name.ends_with(".pq") {
            InputFormat::Parquet
        } else if name.ends_with(".gz") {
            InputFormat::GzipJsonLines
        } else {
            InputFormat::JsonLines
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    #[serde(default)]
    id: Option<serde_json::Value>,
    text: Option<String>,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    language: Option<String>,
    #[serde(default)]
    url: Option<String>,
}

fn id_string(v: serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::Null => None,
        serde_json::Value::String(s) => Some(s),
        other => Some(other.to_string()),
    }
}

fn metadata(source: Option<String>, language: Option<String>, url: Option<String>) -> Metadata {
    Metadata {
        source: source.unwrap_or_default(),
        language: language
            .filter(|l| !l.is_empty())
            .unwrap_or_else(|| UNDETERMINED_LANGUAGE.to_owned()),
        url,
    }
}

/// Parses one JSON Lines record.
pub fn parse_json_record(line: &[u8], location: impl Fn() -> String) -> Record {
    let err = |message: String| RecordError {
        location: location(),
        message,
    };
    if let Err(e) = std::str::from_utf8(line) {
        return Err(err(format!(
            "invalid UTF-8 at byte {}",
            e.valid_up_to()
        )));
    }
    let rec: JsonRecord =
        serde_json::from_slice(line).map_err(|e| err(format!("malformed JSON: {e}")))?;
    let text = rec.text.ok_or_else(|| err("missing `text` field".into()))?;
    Ok(NewDocument {
        external_id: rec.id.and_then(id_string),
        text,
        metadata: metadata(rec.source, rec.language, rec.url),
    })
}

/// Iterates the records of one JSON Lines stream. Blank lines are skipped.
pub struct JsonLinesReader<R> {
    lines: io::Split<BufReader<R>>,
    label: String,
    line_no: usize,
}

impl<R: Read> JsonLinesReader<R> {
    pub fn new(reader: R, label: impl Into<String>) -> Self {
        JsonLinesReader {
            lines: BufReader::with_capacity(1 << 20, reader).split(b'\n'),
            label: label.into(),
            line_no: 0,
        }
    }
}

impl<R: Read> Iterator for JsonLinesReader<R> {
    type Item = io::Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            self.line_no += 1;
            if line.last() == Some(&b'\r') {
                line.pop();
            }
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let (label, n) = (&self.label, self.line_no);
            return Some(Ok(parse_json_record(&line, || format!("{label}:{n}"))));
        }
    }
}

fn field_string(field: &Field) -> Result<Option<String>, String> {
    match field {
        Field::Null => Ok(None),
        Field::Str(s) => Ok(Some(s.clone())),
        Field::Bytes(b) => std::str::from_utf8(b.data())
            .map(|s| Some(s.to_owned()))
            .map_err(|e| format!("invalid UTF-8 at byte {}", e.valid_up_to())),
        other => Ok(Some(other.to_string())),
    }
}

fn parquet_record(row: &Row, location: String) -> Record {
    let err = |message: String| RecordError {
        location: location.clone(),
        message,
    };
    let mut id = None;
    let mut text = None;
    let mut source = None;
    let mut language = None;
    let mut url = None;
    for (name, field) in row.get_column_iter() {
        let slot = match name.as_str() {
            "id" => &mut id,
            "text" => &mut text,
            "source" => &mut source,
            "language" => &mut language,
            "url" => &mut url,
            _ => continue,
        };
        *slot = field_string(field).map_err(|m| err(format!("column `{name}`: {m}")))?;
    }
    let text = text.ok_or_else(|| err("missing `text` column".into()))?;
    Ok(NewDocument {
        external_id: id,
        text,
        metadata: metadata(source, language, url),
    })
}

/// Reads every document of every input file in order.
pub struct InputFiles {
    paths: std::vec::IntoIter<PathBuf>,
    current: Option<Box<dyn Iterator<Item = io::Result<Record>> + Send>>,
    current_path: PathBuf,
}

impl InputFiles {
    pub fn new(paths: Vec<PathBuf>) -> Self {
        InputFiles {
            paths: paths.into_iter(),
            current: None,
            current_path: PathBuf::new(),
        }
    }

    fn open(path: &Path) -> io::Result<Box<dyn Iterator<Item = io::Result<Record>> + Send>> {
        let label = path.display().to_string();
        Ok(match InputFormat::detect(path) {
            InputFormat::JsonLines => Box::new(JsonLinesReader::new(File::open(path)?, label)),
            InputFormat::GzipJsonLines => Box::new(JsonLinesReader::new(
                MultiGzDecoder::new(File::open(path)?),
                label,
            )),
            InputFormat::Parquet => {
                let reader = SerializedFileReader::new(File::open(path)?)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                let rows = RowIter::from_file_into(Box::new(reader))
                    .enumerate()
                    .map(move |(i, row)| {
                        let location = format!("{label}#{i}");
                        Ok(match row {
                            Ok(row) => parquet_record(&row, location),
                            Err(e) => Err(RecordError {
                                location,
                                message: e.to_string(),
                            }),
                        })
                    });
                Box::new(rows)
            }
        })
    }
}

impl Iterator for InputFiles {
    type Item = Result<Record, InputUnreadable>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(cur) = &mut self.current {
                match cur.next() {
                    Some(Ok(rec)) => return Some(Ok(rec)),
                    Some(Err(source)) => {
                        self.current = None;
                        return Some(Err(InputUnreadable {
                            path: self.current_path.clone(),
                            source,
                        }));
                    }
                    None => self.current = None,
                }
            }
            let path = self.paths.next()?;
            match InputFiles::open(&path) {
                Ok(it) => {
                    self.current = Some(it);
                    self.current_path = path;
                }
                Err(source) => return Some(Err(InputUnreadable { path, source })),
            }
        }
    }
}

/// Mean text size over the first `limit` readable records, used to plan
/// chunk sizes before a run.
pub fn sample_avg_doc_size(paths: &[PathBuf], limit: usize) -> Result<Option<u64>, InputUnreadable> {
    let mut total = 0u64;
    let mut n = 0u64;
    for rec in InputFiles::new(paths.to_vec()).take(limit) {
        if let Ok(doc) = rec? {
            total += doc.text.len() as u64;
            n += 1;
        }
    }
    Ok((n > 0).then(|| total.div_ceil(n).max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn json_lines_with_bad_records() {
        let mut data = Vec::new();
        data.extend_from_slice(b"{\"id\": \"a\", \"text\": \"hello\", \"language\": \"eng\"}\n");
        data.extend_from_slice(b"\n");
        data.extend_from_slice(b"{\"id\": 7, \"text\": \"bad \xff byte\"}\n");
        data.extend_from_slice(b"{\"text\": 5}\r\n");
        data.extend_from_slice(b"{\"id\": \"n\"}\n");
        data.extend_from_slice(b"{\"text\": \"last\", \"url\": \"http://x\"}");
        let recs: Vec<Record> = JsonLinesReader::new(&data[..], "mem")
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(recs.len(), 5);
        let first = recs[0].as_ref().unwrap();
        assert_eq!(first.external_id.as_deref(), Some("a"));
        assert_eq!(first.metadata.language, "eng");
        let e = recs[1].as_ref().unwrap_err();
        assert_eq!(e.location, "mem:3");
        assert!(e.message.contains("UTF-8"), "{}", e.message);
        assert!(recs[2].as_ref().unwrap_err().message.contains("malformed"));
        assert!(recs[3].as_ref().unwrap_err().message.contains("missing"));
        let last = recs[4].as_ref().unwrap();
        assert_eq!(last.metadata.language, "und");
        assert_eq!(last.metadata.url.as_deref(), Some("http://x"));
    }

    #[test]
    fn gzip_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let gz = dir.path().join("docs.jsonl.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::fast());
        for i in 0..10 {
            writeln!(enc, "{{\"id\": {i}, \"text\": \"doc number {i}\"}}").unwrap();
        }
        enc.finish().unwrap();
        let missing = dir.path().join("missing.jsonl");
        let recs: Vec<_> = InputFiles::new(vec![gz.clone(), missing]).collect();
        assert_eq!(recs.len(), 11);
        assert_eq!(recs[9].as_ref().unwrap().as_ref().unwrap().external_id.as_deref(), Some("9"));
        assert!(recs[10].is_err());
        assert_eq!(sample_avg_doc_size(&[gz], 100).unwrap(), Some(12));
    }

    #[test]
    fn format_detection() {
        assert_eq!(InputFormat::detect(Path::new("a/b.parquet")), InputFormat::Parquet);
        assert_eq!(InputFormat::detect(Path::new("b.jsonl.GZ")), InputFormat::GzipJsonLines);
        assert_eq!(InputFormat::detect(Path::new("b.ndjson")), InputFormat::JsonLines);
    }
}
