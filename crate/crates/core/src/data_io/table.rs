//! Shared plumbing for the line-oriented CSV formats.
//!
//! Every versioned file starts with `#version <name>/<n>`, may carry `#key value`
//! metadata lines, ignores other `#` comments and blank lines, and then has one
//! column-header row followed by data rows.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use csv::{ReaderBuilder, StringRecord, Trim};

use crate::error::{Error, Result};

/// Metadata lines recognised in file preambles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Meta {
    /// `#epoch <RFC 3339>`: absolute time of `t = 0`.
    pub epoch: Option<DateTime<Utc>>,
    /// `#origin <lat> <lon>`: local frame origin for geodetic files.
    pub origin: Option<(f64, f64)>,
    /// Other `#key value` lines, in order. Free comments are not kept.
    pub extra: Vec<(String, String)>,
}

pub(crate) struct Table {
    pub meta: Meta,
    pub header: Option<(u64, Vec<String>)>,
    pub rows: Vec<(u64, StringRecord)>,
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, s: &str) -> Result<()> {
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn as_utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() as u64 + 1;
        Error::parse(line, "invalid UTF-8")
    })
}

/// Keys that are reserved for [`Meta`] fields.
const META_KEYS: &[&str] = &["epoch", "origin"];

pub(crate) fn parse_table(bytes: &[u8], version: &str) -> Result<Table> {
    let text = as_utf8(bytes)?;
    let mut meta = Meta::default();
    let mut saw_version = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_version {
            let found = line.strip_prefix("#version").map(str::trim);
            if found != Some(version) {
                return Err(Error::parse(
                    line_no,
                    format!("expected header `#version {version}`, found `{line}`"),
                ));
            }
            saw_version = true;
            continue;
        }
        let Some(comment) = line.strip_prefix('#') else {
            // Metadata is only honoured before the column header.
            break;
        };
        let comment = comment.trim_start();
        let (key, value) = match comment.split_once(char::is_whitespace) {
            Some((k, v)) => (k, v.trim()),
            None => (comment, ""),
        };
        match key {
            "epoch" => {
                let ts = DateTime::parse_from_rfc3339(value)
                    .map_err(|e| Error::parse(line_no, format!("bad epoch `{value}`: {e}")))?;
                meta.epoch = Some(ts.with_timezone(&Utc));
            }
            "origin" => {
                let mut it = value.split_whitespace();
                let parse = |s: Option<&str>| -> Result<f64> {
                    s.and_then(|s| s.parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(line_no, format!("bad origin `{value}`")))
                };
                let lat = parse(it.next())?;
                let lon = parse(it.next())?;
                if it.next().is_some() {
                    return Err(Error::parse(line_no, format!("bad origin `{value}`")));
                }
                meta.origin = Some((lat, lon));
            }
            k if is_meta_key(k) => meta.extra.push((k.to_string(), value.to_string())),
            _ => {}
        }
    }
    if !saw_version {
        return Err(Error::parse(1, format!("missing `#version {version}` header")));
    }

    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows = Vec::new();
    let lines = LineIndex::new(text);
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| lines.line_of(p.byte()));
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| lines.line_of(p.byte()));
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if header.is_none() {
            header = Some((line, rec.iter().map(str::to_string).collect()));
        } else {
            rows.push((line, rec));
        }
    }
    Ok(Table { meta, header, rows })
}

/// Byte offsets of line starts, for mapping csv positions back to lines.
struct LineIndex<'a> {
    text: &'a str,
    starts: Vec<usize>,
}

impl<'a> LineIndex<'a> {
    fn new(text: &'a str) -> Self {
        let starts = std::iter::once(0)
            .chain(text.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        Self { text, starts }
    }

    /// 1-based line of the record starting at byte offset `byte`. The csv
    /// reader reports the offset before any blank or comment lines it skipped.
    fn line_of(&self, byte: u64) -> u64 {
        let pos = (byte as usize).min(self.text.len());
        let mut idx = self.starts.partition_point(|&s| s <= pos) - 1;
        while idx + 1 < self.starts.len() {
            let line = self.text[self.starts[idx]..self.starts[idx + 1]].trim();
            if !(line.is_empty() || line.starts_with('#')) || self.starts[idx + 1] >= self.text.len() {
                break;
            }
            idx += 1;
        }
        idx as u64 + 1
    }
}

/// `#key value` lines where the key looks like an identifier are metadata;
/// anything else is a free comment.
fn is_meta_key(k: &str) -> bool {
    !k.is_empty()
        && !META_KEYS.contains(&k)
        && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && k.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
}

pub(crate) fn field_f64(rec: &StringRecord, line: u64, idx: usize, name: &str) -> Result<f64> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::parse(line, format!("missing field `{name}`")))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(line, format!("field `{name}`: `{raw}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("field `{name}` is not finite")));
    }
    Ok(v)
}

pub(crate) fn expect_len(rec: &StringRecord, line: u64, n: usize) -> Result<()> {
    if rec.len() != n {
        return Err(Error::parse(line, format!("expected {n} fields, found {}", rec.len())));
    }
    Ok(())
}

pub(crate) fn format_epoch(epoch: &DateTime<Utc>) -> String {
    epoch.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub(crate) fn write_preamble(out: &mut String, version: &str, meta: &Meta) {
    let _ = writeln!(out, "#version {version}");
    if let Some(epoch) = &meta.epoch {
        let _ = writeln!(out, "#epoch {}", format_epoch(epoch));
    }
    if let Some((lat, lon)) = meta.origin {
        let _ = writeln!(out, "#origin {lat} {lon}");
    }
    for (k, v) in &meta.extra {
        let _ = writeln!(out, "#{k} {v}");
    }
}

/// Append `values` as one comma-separated row using round-trip float formatting.
pub(crate) fn write_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}
