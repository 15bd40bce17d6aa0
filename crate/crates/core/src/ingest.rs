//! Streaming ingestion of Stack Exchange post dumps and the canonical
//! line-oriented corpus format.
//!
//! Canonical format, one question per line:
//!
//! ```text
//! question_id<TAB>YYYY-MM<TAB>tag1;tag2;...;tagK
//! ```

use std::borrow::Borrow;
use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Read, Write};
use std::str::FromStr;

use quick_xml::events::Event;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAX_TAGS_PER_QUESTION: usize = 5;

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Month {
    year: u16,
    month: u8,
}

impl Month {
    pub fn new(year: u16, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) || year > 9999 {
            return Err(Error::InvalidMonth(format!("{year:04}-{month:02}")));
        }
        Ok(Self { year, month })
    }

    /// Month of an ISO-8601 timestamp such as `2008-08-01T13:57:07.123`.
    pub fn from_timestamp(ts: &str) -> Result<Self> {
        match ts.get(..7) {
            Some(prefix) if ts.len() == 7 || ts.as_bytes()[7] == b'-' => prefix.parse(),
            _ => Err(Error::InvalidMonth(ts.to_string())),
        }
    }

    pub fn year(self) -> u16 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            Self {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Self {
                year: self.year,
                month: self.month + 1,
            }
        }
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidMonth(s.to_string());
        let b = s.as_bytes();
        if b.len() != 7 || b[4] != b'-' || !b[..4].iter().chain(&b[5..]).all(u8::is_ascii_digit) {
            return Err(bad());
        }
        let year = s[..4].parse().map_err(|_| bad())?;
        let month = s[5..].parse().map_err(|_| bad())?;
        Month::new(year, month).map_err(|_| bad())
    }
}

impl TryFrom<String> for Month {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}

/// One tagged question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionRecord {
    pub question_id: u64,
    pub month: Month,
    pub tags: Vec<String>,
}

impl QuestionRecord {
    /// Builds a record, normalizing tags (trimmed, lowercase) and enforcing
    /// 1..=5 distinct valid tags.
    pub fn new<S: AsRef<str>>(question_id: u64, month: Month, tags: &[S]) -> Result<Self> {
        let tags = normalize_tags(tags.iter().map(AsRef::as_ref))?;
        Ok(Self {
            question_id,
            month,
            tags,
        })
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }
}

fn validate_tag(tag: &str) -> Result<()> {
    let bad = tag.is_empty()
        || tag
            .chars()
            .any(|c| c.is_whitespace() || c.is_uppercase() || matches!(c, ';' | '|' | '<' | '>'));
    if bad {
        Err(Error::InvalidTag(tag.to_string()))
    } else {
        Ok(())
    }
}

fn normalize_tags<'a, I: IntoIterator<Item = &'a str>>(raw: I) -> Result<Vec<String>> {
    let mut tags: Vec<String> = Vec::with_capacity(MAX_TAGS_PER_QUESTION);
    for tag in raw {
        let tag = tag.trim().to_lowercase();
        if tag.is_empty() {
            continue;
        }
        validate_tag(&tag)?;
        if tags.contains(&tag) {
            return Err(Error::DuplicateTag(tag));
        }
        tags.push(tag);
    }
    match tags.len() {
        0 => Err(Error::NoTags),
        n if n > MAX_TAGS_PER_QUESTION => Err(Error::TooManyTags(n)),
        _ => Ok(tags),
    }
}

/// Decodes a dump `Tags` attribute. Accepts the angle-bracket encoding,
/// HTML-escaped (`&lt;a&gt;&lt;b&gt;`) or raw (`<a><b>`), and the pipe
/// encoding of newer dumps (`|a|b|`). Tags are returned in file order.
pub fn parse_tags_field(raw: &str) -> Result<Vec<String>> {
    let decoded = quick_xml::escape::unescape(raw)
        .map_err(|e| Error::InvalidTagsField(format!("{raw:?}: {e}")))?;
    let s = decoded.trim();
    if s.is_empty() {
        return Err(Error::NoTags);
    }
    if let Some(inner) = s.strip_prefix('<') {
        let inner = inner
            .strip_suffix('>')
            .ok_or_else(|| Error::InvalidTagsField(raw.to_string()))?;
        normalize_tags(inner.split("><"))
    } else if s.starts_with('|') {
        normalize_tags(s.split('|'))
    } else {
        Err(Error::InvalidTagsField(raw.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub line: u64,
    pub reason: String,
}

/// Rows the parser did not turn into records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    /// Malformed or rejected question rows, with their line numbers.
    pub entries: Vec<SkipEntry>,
    /// Rows that are not questions (answers, wiki posts, ...).
    pub non_question_rows: u64,
    /// Question rows without any tag.
    pub untagged_questions: u64,
}

impl SkipReport {
    fn push(&mut self, line: u64, reason: impl Into<String>) {
        self.entries.push(SkipEntry {
            line,
            reason: reason.into(),
        });
    }

    /// Writes `line_number<TAB>reason` lines.
    pub fn write_tsv<W: Write>(&self, mut sink: W) -> io::Result<()> {
        for e in &self.entries {
            writeln!(sink, "{}\t{}", e.line, e.reason.replace(['\t', '\n'], " "))?;
        }
        sink.flush()
    }
}

/// Streaming parser over a `Posts.xml` dump with one `<row .../>` per line.
///
/// Yields question records in file order. Only the current line is
/// buffered. Non-row lines (XML declaration, `<posts>` wrapper) are
/// ignored; rejected rows go to the [`SkipReport`].
pub struct PostsParser<R> {
    reader: R,
    line: String,
    line_number: u64,
    rows: u64,
    skips: SkipReport,
}

impl<R: BufRead> PostsParser<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line: String::with_capacity(4096),
            line_number: 0,
            rows: 0,
            skips: SkipReport::default(),
        }
    }

    pub fn skip_report(&self) -> &SkipReport {
        &self.skips
    }

    pub fn into_skip_report(self) -> SkipReport {
        self.skips
    }

    /// Number of `<row>` lines seen so far.
    pub fn rows_seen(&self) -> u64 {
        self.rows
    }

    fn parse_row(&mut self) -> Option<QuestionRecord> {
        let line_no = self.line_number;
        match parse_row_line(self.line.trim()) {
            Ok(Row::Question(r)) => Some(r),
            Ok(Row::NotQuestion) => {
                self.skips.non_question_rows += 1;
                None
            }
            Ok(Row::Untagged) => {
                self.skips.untagged_questions += 1;
                self.skips.push(line_no, Error::NoTags.to_string());
                None
            }
            Err(e) => {
                self.skips.push(line_no, e.to_string());
                None
            }
        }
    }
}

enum Row {
    Question(QuestionRecord),
    NotQuestion,
    Untagged,
}

fn parse_row_line(line: &str) -> Result<Row> {
    let malformed = |reason: String| Error::InvalidTagsField(reason);
    let mut reader = quick_xml::Reader::from_str(line);
    let start = match reader.read_event() {
        Ok(Event::Empty(e)) | Ok(Event::Start(e)) => e,
        Ok(_) => return Err(malformed("expected a row element".into())),
        Err(e) => return Err(malformed(format!("malformed row: {e}"))),
    };
    let (mut id, mut post_type, mut created, mut tags) = (None, None, None, None);
    for attr in start.attributes() {
        let attr = attr.map_err(|e| malformed(format!("malformed attribute: {e}")))?;
        let value = || {
            std::str::from_utf8(&attr.value)
                .map(str::to_owned)
                .map_err(|_| malformed("attribute is not UTF-8".into()))
        };
        match attr.key.as_ref() {
            b"Id" => id = Some(value()?),
            b"PostTypeId" => post_type = Some(value()?),
            b"CreationDate" => created = Some(value()?),
            b"Tags" => tags = Some(value()?),
            _ => {}
        }
    }
    let post_type = post_type.ok_or_else(|| malformed("missing PostTypeId".into()))?;
    if post_type != "1" {
        return Ok(Row::NotQuestion);
    }
    let id: u64 = id
        .ok_or_else(|| malformed("missing Id".into()))?
        .parse()
        .map_err(|_| malformed("non-numeric Id".into()))?;
    let month =
        Month::from_timestamp(&created.ok_or_else(|| malformed("missing CreationDate".into()))?)?;
    let tags = match tags {
        Some(t) if !t.trim().is_empty() => parse_tags_field(&t)?,
        _ => return Ok(Row::Untagged),
    };
    Ok(Row::Question(QuestionRecord {
        question_id: id,
        month,
        tags,
    }))
}

impl<R: BufRead> Iterator for PostsParser<R> {
    type Item = Result<QuestionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line.clear();
            match self.reader.read_line(&mut self.line) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::Io(e))),
            }
            self.line_number += 1;
            if !self.line.trim_start().starts_with("<row") {
                continue;
            }
            self.rows += 1;
            if let Some(record) = self.parse_row() {
                return Some(Ok(record));
            }
        }
    }
}

/// Convenience wrapper: `PostsParser::new(source)`.
pub fn parse_posts_stream<R: BufRead>(source: R) -> PostsParser<R> {
    PostsParser::new(source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonthRange {
    pub first: Month,
    pub last: Month,
}

/// Provenance of a canonical corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub record_count: u64,
    pub month_range: Option<MonthRange>,
    pub distinct_tags: u64,
    /// `sha256:<hex>` of the canonical bytes.
    pub source_digest: String,
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Writes records in canonical form and returns the manifest. Records must
/// be in non-decreasing month order.
pub fn write_canonical<I, W>(records: I, sink: W) -> Result<CorpusManifest>
where
    I: IntoIterator,
    I::Item: Borrow<QuestionRecord>,
    W: Write,
{
    let mut out = HashingWriter {
        inner: io::BufWriter::new(sink),
        hasher: Sha256::new(),
    };
    let mut tags_seen: HashSet<String> = HashSet::new();
    let mut range: Option<MonthRange> = None;
    let mut count = 0u64;
    for record in records {
        let r = record.borrow();
        if let Some(range) = &mut range {
            if r.month < range.last {
                return Err(Error::UnsortedInput {
                    previous: range.last.to_string(),
                    found: r.month.to_string(),
                });
            }
            range.last = r.month;
        } else {
            range = Some(MonthRange {
                first: r.month,
                last: r.month,
            });
        }
        write!(out, "{}\t{}\t", r.question_id, r.month)?;
        for (i, tag) in r.tags.iter().enumerate() {
            if i > 0 {
                out.write_all(b";")?;
            }
            out.write_all(tag.as_bytes())?;
            if !tags_seen.contains(tag.as_str()) {
                tags_seen.insert(tag.clone());
            }
        }
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(CorpusManifest {
        record_count: count,
        month_range: range,
        distinct_tags: tags_seen.len() as u64,
        source_digest: format!("sha256:{}", hex::encode(out.hasher.finalize())),
    })
}

/// Reader over a canonical corpus. Any malformed line is fatal.
pub struct CanonicalReader<R> {
    reader: R,
    line: String,
    line_number: u64,
    last_month: Option<Month>,
    failed: bool,
}

pub fn read_canonical<R: BufRead>(source: R) -> CanonicalReader<R> {
    CanonicalReader {
        reader: source,
        line: String::new(),
        line_number: 0,
        last_month: None,
        failed: false,
    }
}

impl<R: BufRead> CanonicalReader<R> {
    fn parse_line(&self) -> Result<QuestionRecord> {
        let line = self.line.strip_suffix('\n').unwrap_or(&self.line);
        let line = line.strip_suffix('\r').unwrap_or(line);
        let mut fields = line.split('\t');
        let (Some(id), Some(month), Some(tags), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::param("expected three tab-separated fields"));
        };
        let id = id
            .parse()
            .map_err(|_| Error::param(format!("bad question id {id:?}")))?;
        QuestionRecord::new(id, month.parse()?, &tags.split(';').collect::<Vec<_>>())
    }
}

impl<R: BufRead> Iterator for CanonicalReader<R> {
    type Item = Result<QuestionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        self.line.clear();
        match self.reader.read_line(&mut self.line) {
            Ok(0) => return None,
            Ok(_) => {}
            Err(e) => {
                self.failed = true;
                return Some(Err(Error::Io(e)));
            }
        }
        self.line_number += 1;
        let line = self.line_number;
        let record = self.parse_line().and_then(|r| match self.last_month {
            Some(prev) if r.month < prev => Err(Error::UnsortedInput {
                previous: prev.to_string(),
                found: r.month.to_string(),
            }),
            _ => Ok(r),
        });
        match record {
            Ok(r) => {
                self.last_month = Some(r.month);
                Some(Ok(r))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(Error::Malformed {
                    line,
                    reason: e.to_string(),
                }))
            }
        }
    }
}

/// `sha256:<hex>` digest of everything readable from `source`.
pub fn digest_reader<R: Read>(mut source: R) -> io::Result<String> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = source.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("sha256:{}", hex::encode(hasher.finalize())))
}
