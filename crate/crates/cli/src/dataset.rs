//! JSONL datasets, score-scale ingestion and the TSV import shim.
//!
//! A dataset file holds one JSON object per line:
//! `{"id", "text_q", "text_a", "label", "group"?, "split"?}`. Blank lines are
//! skipped; everything else must parse, and errors carry the 1-based line.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use bsc_core::{PairRecord, Split};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::fsutil;

fn line_err(path: &str, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Line {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn non_blank_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses dataset text; `origin` names the source in error messages.
pub fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (line, raw) in non_blank_lines(text) {
        let rec: PairRecord =
            serde_json::from_str(raw).map_err(|e| line_err(origin, line, e.to_string()))?;
        check_record(&rec, origin, line, &mut ids)?;
        out.push(rec);
    }
    Ok(out)
}

fn check_record(
    rec: &PairRecord,
    origin: &str,
    line: usize,
    ids: &mut HashSet<String>,
) -> Result<()> {
    if !(rec.label.is_finite() && (0.0..=1.0).contains(&rec.label)) {
        return Err(line_err(
            origin,
            line,
            format!("label {} outside [0, 1]", rec.label),
        ));
    }
    if !ids.insert(rec.id.clone()) {
        return Err(line_err(origin, line, format!("duplicate id {:?}", rec.id)));
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Vec<PairRecord>> {
    parse_jsonl(&fsutil::read_to_string(path)?, &path.display().to_string())
}

pub fn to_jsonl(records: &[PairRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_dataset(path: &Path, records: &[PairRecord]) -> Result<()> {
    fsutil::write_atomic(path, to_jsonl(records).as_bytes())
}

/// Records of one split, in file order.
pub fn split_of(records: &[PairRecord], split: Split) -> Vec<PairRecord> {
    records
        .iter()
        .filter(|r| r.split == split)
        .cloned()
        .collect()
}

/// Closed raw score interval `[lo, hi]`, written `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreScale {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreScale {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CliError::Validation(format!(
                "invalid score scale {lo}:{hi}; need finite lo < hi"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Affine map onto `[0, 1]`; `None` outside the scale.
    pub fn normalize(&self, raw: f64) -> Option<f64> {
        if !(raw.is_finite() && raw >= self.lo && raw <= self.hi) {
            return None;
        }
        Some(((raw - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0))
    }
}

impl fmt::Display for ScoreScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

impl FromStr for ScoreScale {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            CliError::Validation(format!(
                "invalid score scale {s:?}; expected lo:hi, e.g. 1:4"
            ))
        };
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum RawFormat {
    /// JSON lines with a raw `score` in place of `label`.
    #[default]
    Jsonl,
    /// Tab-separated `id, text_q, text_a, score[, group[, split]]`, no header;
    /// `\t`, `\n` and `\\` escapes inside fields.
    Tsv,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    text_q: String,
    text_a: String,
    score: f64,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    split: Split,
}

/// Converts a raw file into dataset records, normalizing scores onto `[0, 1]`.
/// Texts pass through unchanged and record order is preserved.
pub fn ingest(
    text: &str,
    origin: &str,
    scale: ScoreScale,
    format: RawFormat,
) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (line, raw) in non_blank_lines(text) {
        let r = match format {
            RawFormat::Jsonl => {
                serde_json::from_str(raw).map_err(|e| line_err(origin, line, e.to_string()))?
            }
            RawFormat::Tsv => parse_tsv_line(raw).map_err(|m| line_err(origin, line, m))?,
        };
        let label = scale.normalize(r.score).ok_or_else(|| {
            line_err(
                origin,
                line,
                format!("score {} outside the scale {scale}", r.score),
            )
        })?;
        let rec = PairRecord {
            id: r.id,
            text_q: r.text_q,
            text_a: r.text_a,
            label,
            group: r.group,
            split: r.split,
        };
        check_record(&rec, origin, line, &mut ids)?;
        out.push(rec);
    }
    Ok(out)
}

fn parse_tsv_line(line: &str) -> std::result::Result<RawRecord, String> {
    let fields: Vec<String> = line
        .split('\t')
        .map(unescape)
        .collect::<std::result::Result<_, _>>()?;
    if !(4..=6).contains(&fields.len()) {
        return Err(format!(
            "expected 4 to 6 tab-separated fields, found {}",
            fields.len()
        ));
    }
    let score = fields[3]
        .trim()
        .parse()
        .map_err(|_| format!("score {:?} is not a number", fields[3]))?;
    let group = fields.get(4).filter(|g| !g.is_empty()).cloned();
    let split = match fields.get(5) {
        Some(s) => s.parse().map_err(|e: bsc_core::Error| e.to_string())?,
        None => Split::Train,
    };
    let mut it = fields.into_iter();
    let (id, text_q, text_a) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    Ok(RawRecord {
        id,
        text_q,
        text_a,
        score,
        group,
        split,
    })
}

fn unescape(field: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            other => {
                return Err(format!(
                    "bad escape \\{}",
                    other.map(String::from).unwrap_or_default()
                ))
            }
        }
    }
    Ok(out)
}

/// Inverse of the TSV field unescaping.
pub fn escape_tsv(field: &str) -> String {
    field
        .replace('\\', "\\\\")
        .replace('\t', "\\t")
        .replace('\n', "\\n")
}
