//! The `web_content_analyzer` chain: HTML stripping, word tokenization,
//! lowercasing and ASCII folding.
//!
//! The same [`Analyzer`] is applied at index time and at query time, so a
//! query whose analyzed terms equal a document's terms always matches it.

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

/// An analyzed term together with its ordinal position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub term: String,
    pub position: u32,
    /// Byte offsets `(start, end)` into the source text as given to the
    /// analyzer, before any HTML stripping.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    HtmlStrip,
    Tokenize,
    Lowercase,
    AsciiFold,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AnalyzerConfigError {
    #[error("analyzer must contain exactly one tokenize stage, found {0}")]
    TokenizeCount(usize),
    #[error("stage {0:?} operates on text and must precede tokenize")]
    TextStageAfterTokenize(Stage),
    #[error("stage {0:?} operates on terms and must follow tokenize")]
    TermStageBeforeTokenize(Stage),
}

/// Ordered list of analysis stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Stage>", into = "Vec<Stage>")]
pub struct AnalyzerConfig {
    stages: Vec<Stage>,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        AnalyzerConfig {
            stages: vec![
                Stage::HtmlStrip,
                Stage::Tokenize,
                Stage::Lowercase,
                Stage::AsciiFold,
            ],
        }
    }
}

impl AnalyzerConfig {
    pub fn new(stages: Vec<Stage>) -> Result<Self, AnalyzerConfigError> {
        let tokenize_at: Vec<usize> = stages
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == Stage::Tokenize)
            .map(|(i, _)| i)
            .collect();
        if tokenize_at.len() != 1 {
            return Err(AnalyzerConfigError::TokenizeCount(tokenize_at.len()));
        }
        let split = tokenize_at[0];
        for (i, stage) in stages.iter().enumerate() {
            match stage {
                Stage::HtmlStrip if i > split => {
                    return Err(AnalyzerConfigError::TextStageAfterTokenize(*stage))
                }
                Stage::Lowercase | Stage::AsciiFold if i < split => {
                    return Err(AnalyzerConfigError::TermStageBeforeTokenize(*stage))
                }
                _ => {}
            }
        }
        Ok(AnalyzerConfig { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }
}

impl TryFrom<Vec<Stage>> for AnalyzerConfig {
    type Error = AnalyzerConfigError;

    fn try_from(stages: Vec<Stage>) -> Result<Self, Self::Error> {
        AnalyzerConfig::new(stages)
    }
}

impl From<AnalyzerConfig> for Vec<Stage> {
    fn from(config: AnalyzerConfig) -> Self {
        config.stages
    }
}

/// Plain text produced by [`strip_html_mapped`] plus, for every output byte,
/// the source byte range it was produced from.
#[derive(Debug, Clone)]
pub struct MappedText {
    pub text: String,
    starts: Vec<usize>,
    ends: Vec<usize>,
}

impl MappedText {
    fn identity(text: &str) -> Self {
        MappedText {
            text: text.to_owned(),
            starts: Vec::new(),
            ends: Vec::new(),
        }
    }

    fn is_identity(&self) -> bool {
        self.starts.is_empty() && !self.text.is_empty()
    }

    /// Maps an output byte range back to the source byte range.
    pub fn source_span(&self, start: usize, end: usize) -> (usize, usize) {
        if self.is_identity() || end == 0 {
            return (start, end);
        }
        (self.starts[start], self.ends[end - 1])
    }

    fn push(&mut self, c: char, src_start: usize, src_end: usize) {
        self.text.push(c);
        for _ in 0..c.len_utf8() {
            self.starts.push(src_start);
            self.ends.push(src_end);
        }
    }

    /// Emits a separator unless the output already ends in whitespace.
    fn push_break(&mut self, at: usize) {
        if !self.text.is_empty() && !self.text.ends_with(char::is_whitespace) {
            self.push(' ', at, at);
        }
    }
}

/// Removes markup: tags are dropped, `script`/`style` contents are dropped,
/// tag boundaries become whitespace and character entities are decoded.
pub fn strip_html(raw: &str) -> String {
    let mut mapped = strip_html_mapped(raw);
    let trimmed = mapped.text.trim_end().len();
    mapped.text.truncate(trimmed);
    let lead = mapped.text.len() - mapped.text.trim_start().len();
    mapped.text.split_off(lead)
}

pub fn strip_html_mapped(raw: &str) -> MappedText {
    let mut out = MappedText {
        text: String::with_capacity(raw.len()),
        starts: Vec::with_capacity(raw.len()),
        ends: Vec::with_capacity(raw.len()),
    };
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < raw.len() {
        match bytes[i] {
            b'<' => {
                if let Some(after) = skip_markup(raw, i) {
                    out.push_break(i);
                    i = after;
                } else {
                    out.push('<', i, i + 1);
                    i += 1;
                }
            }
            b'&' => {
                if let Some((decoded, len)) = decode_entity(&raw[i..]) {
                    out.push(decoded, i, i + len);
                    i += len;
                } else {
                    out.push('&', i, i + 1);
                    i += 1;
                }
            }
            _ => {
                let c = raw[i..].chars().next().expect("in bounds");
                out.push(c, i, i + c.len_utf8());
                i += c.len_utf8();
            }
        }
    }
    out
}

/// If `raw[at..]` starts a tag, comment or declaration, returns the byte
/// offset just past it (and past the element body for script/style).
/// Returns `None` when the `<` does not start markup and should stay text.
fn skip_markup(raw: &str, at: usize) -> Option<usize> {
    let rest = &raw[at + 1..];
    if let Some(body) = rest.strip_prefix("!--") {
        let end = body
            .find("-->")
            .map(|p| at + 4 + p + 3)
            .unwrap_or(raw.len());
        return Some(end);
    }
    let first = rest.chars().next()?;
    let closing = first == '/';
    let is_tag = first.is_ascii_alphabetic()
        || first == '!'
        || first == '?'
        || (closing && rest[1..].starts_with(|c: char| c.is_ascii_alphabetic()));
    if !is_tag {
        return None;
    }
    // Unclosed tags swallow the rest of the input.
    let tag_end = match find_tag_end(rest) {
        Some(p) => at + 1 + p + 1,
        None => return Some(raw.len()),
    };
    if closing {
        return Some(tag_end);
    }
    let name: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    if name == "script" || name == "style" {
        let self_closing = raw[..tag_end].ends_with("/>");
        if self_closing {
            return Some(tag_end);
        }
        let close = format!("</{name}");
        return Some(
            find_ascii_case_insensitive(&raw[tag_end..], &close)
                .map(|p| {
                    let from = tag_end + p;
                    find_tag_end(&raw[from..])
                        .map(|q| from + q + 1)
                        .unwrap_or(raw.len())
                })
                .unwrap_or(raw.len()),
        );
    }
    Some(tag_end)
}

/// Position of the `>` closing a tag, honouring quoted attribute values.
fn find_tag_end(s: &str) -> Option<usize> {
    let mut quote: Option<u8> = None;
    for (i, b) in s.bytes().enumerate() {
        match (quote, b) {
            (Some(q), _) if b == q => quote = None,
            (Some(_), _) => {}
            (None, b'"') | (None, b'\'') => quote = Some(b),
            (None, b'>') => return Some(i),
            _ => {}
        }
    }
    None
}

fn find_ascii_case_insensitive(haystack: &str, needle: &str) -> Option<usize> {
    let h = haystack.as_bytes();
    let n = needle.as_bytes();
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Decodes a character reference at the start of `s`, returning the decoded
/// character and the number of bytes consumed.
fn decode_entity(s: &str) -> Option<(char, usize)> {
    let end = s.bytes().take(12).position(|b| b == b';')?;
    let body = &s[1..end];
    let c = if let Some(num) = body.strip_prefix('#') {
        let code = match num.strip_prefix(['x', 'X']) {
            Some(hex) => u32::from_str_radix(hex, 16).ok()?,
            None => num.parse::<u32>().ok()?,
        };
        char::from_u32(code)?
    } else {
        match body {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            "nbsp" => '\u{a0}',
            "copy" => '©',
            "reg" => '®',
            "ndash" => '–',
            "mdash" => '—',
            "hellip" => '…',
            "laquo" => '«',
            "raquo" => '»',
            _ => return None,
        }
    };
    Some((c, end + 1))
}

/// Splits plain text into word tokens on Unicode word boundaries.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.unicode_word_indices()
        .enumerate()
        .map(|(i, (start, word))| Token {
            term: word.to_owned(),
            position: i as u32,
            span: (start, start + word.len()),
        })
        .collect()
}

pub fn lowercase(term: &str) -> String {
    term.to_lowercase()
}

/// Folds Latin letters with diacritics to plain ASCII. Characters from other
/// scripts are returned unchanged, including their combining marks.
pub fn ascii_fold(term: &str) -> String {
    if term.is_ascii() {
        return term.to_owned();
    }
    let mut out = String::with_capacity(term.len());
    let mut after_latin = false;
    for c in term.chars() {
        if is_combining_mark(c) {
            if !after_latin {
                out.push(c);
            }
            continue;
        }
        after_latin = is_latin(c);
        if !after_latin || c.is_ascii() {
            out.push(c);
            continue;
        }
        if let Some(s) = fold_special(c) {
            out.push_str(s);
            continue;
        }
        for d in std::iter::once(c).nfkd() {
            if !is_combining_mark(d) {
                out.push(d);
            }
        }
    }
    out
}

fn is_latin(c: char) -> bool {
    matches!(c as u32,
        0x0000..=0x024F
        | 0x1E00..=0x1EFF
        | 0x2C60..=0x2C7F
        | 0xA720..=0xA7FF
        | 0xAB30..=0xAB6F
        | 0xFB00..=0xFB06
        | 0xFF21..=0xFF3A
        | 0xFF41..=0xFF5A)
}

/// Latin letters that have no canonical decomposition.
fn fold_special(c: char) -> Option<&'static str> {
    Some(match c {
        'ß' => "ss",
        'ẞ' => "SS",
        'æ' => "ae",
        'Æ' => "AE",
        'œ' => "oe",
        'Œ' => "OE",
        'ø' => "o",
        'Ø' => "O",
        'đ' => "d",
        'Đ' => "D",
        'ð' => "d",
        'Ð' => "D",
        'ł' => "l",
        'Ł' => "L",
        'þ' => "th",
        'Þ' => "TH",
        'ħ' => "h",
        'Ħ' => "H",
        'ı' => "i",
        'ŧ' => "t",
        'Ŧ' => "T",
        'ƀ' => "b",
        'ɨ' => "i",
        'ƶ' => "z",
        'Ƶ' => "Z",
        _ => return None,
    })
}

/// A configured analysis chain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Analyzer {
    config: AnalyzerConfig,
}

impl Analyzer {
    pub fn new(config: AnalyzerConfig) -> Self {
        Analyzer { config }
    }

    pub fn config(&self) -> &AnalyzerConfig {
        &self.config
    }

    pub fn analyze(&self, raw: &str) -> Vec<Token> {
        let mut mapped = MappedText::identity(raw);
        let mut tokens = Vec::new();
        let mut tokenized = false;
        for stage in self.config.stages() {
            match stage {
                Stage::HtmlStrip => mapped = compose(mapped, strip_html_mapped),
                Stage::Tokenize => {
                    tokens = tokenize(&mapped.text);
                    for t in &mut tokens {
                        t.span = mapped.source_span(t.span.0, t.span.1);
                    }
                    tokenized = true;
                }
                Stage::Lowercase => tokens.iter_mut().for_each(|t| t.term = lowercase(&t.term)),
                Stage::AsciiFold => tokens.iter_mut().for_each(|t| t.term = ascii_fold(&t.term)),
            }
        }
        debug_assert!(tokenized);
        tokens.retain(|t| !t.term.is_empty());
        for (i, t) in tokens.iter_mut().enumerate() {
            t.position = i as u32;
        }
        tokens
    }

    /// Analyzed terms only, without spans.
    pub fn terms(&self, raw: &str) -> Vec<String> {
        self.analyze(raw).into_iter().map(|t| t.term).collect()
    }
}

fn compose(prev: MappedText, stage: fn(&str) -> MappedText) -> MappedText {
    let next = stage(&prev.text);
    if prev.is_identity() || prev.text.is_empty() {
        return next;
    }
    let mut starts = Vec::with_capacity(next.starts.len());
    let mut ends = Vec::with_capacity(next.ends.len());
    for (s, e) in next.starts.iter().zip(&next.ends) {
        let (s0, _) = prev.source_span(*s, s + 1);
        let e0 = if e > s { prev.source_span(e - 1, *e).1 } else { s0 };
        starts.push(s0);
        ends.push(e0);
    }
    MappedText {
        text: next.text,
        starts,
        ends,
    }
}

pub fn analyze(raw: &str, config: &AnalyzerConfig) -> Vec<Token> {
    Analyzer::new(config.clone()).analyze(raw)
}
