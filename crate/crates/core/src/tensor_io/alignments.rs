use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Phone,
    Word,
}

impl FromStr for SegmentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "phone" => Ok(SegmentKind::Phone),
            "word" => Ok(SegmentKind::Word),
            other => Err(format!("unknown segment kind {other:?} (expected phone or word)")),
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentKind::Phone => "phone",
            SegmentKind::Word => "word",
        })
    }
}

/// One aligned phone or word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub utterance_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
    pub kind: SegmentKind,
}

impl SegmentRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

pub fn read_alignments(path: impl AsRef<Path>) -> Result<Vec<SegmentRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignments(&text, &path.display().to_string())
}

/// Parses the 5-column TSV `utterance_id, start_s, end_s, label, kind`.
/// Lines starting with `#` and blank lines are skipped.
pub fn parse_alignments(text: &str, source: &str) -> Result<Vec<SegmentRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let loc = || format!("{source}:{lineno}");
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::format(
                loc(),
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let time = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::format(loc(), format!("{what} {s:?} is not a number")))
        };
        let start_s = time(cols[1], "start")?;
        let end_s = time(cols[2], "end")?;
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 {
            return Err(Error::data(
                loc(),
                format!("times must be finite and non-negative, got {start_s}..{end_s}"),
            ));
        }
        if start_s >= end_s {
            return Err(Error::data(
                loc(),
                format!("start {start_s} is not before end {end_s}"),
            ));
        }
        let utterance_id = cols[0].trim();
        if utterance_id.is_empty() {
            return Err(Error::data(loc(), "empty utterance id"));
        }
        let label = cols[3].trim();
        if label.is_empty() {
            return Err(Error::data(loc(), "empty label"));
        }
        let kind = cols[4]
            .trim()
            .parse()
            .map_err(|m: String| Error::format(loc(), m))?;
        records.push(SegmentRecord {
            utterance_id: utterance_id.to_string(),
            start_s,
            end_s,
            label: label.to_string(),
            kind,
        });
    }
    Ok(records)
}

pub fn write_alignments(records: &[SegmentRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("# utterance_id\tstart_s\tend_s\tlabel\tkind\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.utterance_id, r.start_s, r.end_s, r.label, r.kind
        ));
    }
    super::write_atomic(path.as_ref(), out.as_bytes())
}
