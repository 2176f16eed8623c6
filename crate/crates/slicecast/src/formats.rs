//! On-disk encodings shared by every subcommand.
//!
//! JSON artifacts are wrapped in an [`Artifact`] envelope recording the
//! config hash that produced them. Frame CSVs carry the same hash in a
//! leading `# config_hash:` comment line, which RFC-4180 readers that honour
//! `#` comments skip.

use std::fs;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use slicecast_core::preprocess::SeriesFrame;
use slicecast_core::Instant;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const HASH_COMMENT: &str = "# config_hash: ";

/// Versioned JSON envelope around one artifact payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact<T> {
    pub kind: String,
    pub version: u32,
    pub config_hash: String,
    pub data: T,
}

impl<T> Artifact<T> {
    pub fn new(kind: &str, config_hash: &str, data: T) -> Self {
        Self {
            kind: kind.to_string(),
            version: FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            data,
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline; key order follows field order.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialise");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value))
}

/// Parses JSON text; errors name the offending field path.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(path, &read_text(path)?)
}

/// `2024-01-01T00:00:00Z`.
pub fn format_instant(t: Instant) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_else(|| t.to_string())
}

/// Accepts any RFC 3339 timestamp; sub-second parts are truncated.
pub fn parse_instant(s: &str) -> Option<Instant> {
    DateTime::parse_from_rfc3339(s).ok().map(|d| d.timestamp())
}

/// Serialises a frame: ISO-8601 first column, one column per series, masked
/// cells left empty. Values use shortest round-trip formatting.
pub fn frame_to_csv(frame: &SeriesFrame, config_hash: Option<&str>) -> String {
    let mut out = Vec::new();
    if let Some(h) = config_hash {
        out.extend_from_slice(format!("{HASH_COMMENT}{h}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["timestamp".to_string()];
        header.extend(frame.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for r in 0..frame.rows() {
            let mut record = vec![format_instant(frame.timestamps[r])];
            for c in 0..frame.cols() {
                record.push(if frame.is_valid(r, c) {
                    frame.get(r, c).to_string()
                } else {
                    String::new()
                });
            }
            w.write_record(&record).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    String::from_utf8(out).expect("csv output is utf-8")
}

/// Hash from a leading `# config_hash:` line, if present.
pub fn csv_config_hash(text: &str) -> Option<String> {
    text.lines()
        .next()
        .and_then(|l| l.strip_prefix(HASH_COMMENT))
        .map(|h| h.trim().to_string())
}

pub fn frame_from_csv(path: &Path, text: &str) -> Result<SeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .clone();
    if header.get(0) != Some("timestamp") {
        return Err(Error::format(path, "first column must be `timestamp`"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let row = i + 1;
        let ts = record.get(0).unwrap_or("");
        let t = parse_instant(ts)
            .ok_or_else(|| Error::format(path, format!("row {row}: bad timestamp `{ts}`")))?;
        timestamps.push(t);
        for cell in record.iter().skip(1) {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::format(path, format!("row {row}: bad value `{cell}`")))?;
                values.push(v);
                mask.push(true);
            }
        }
    }
    Ok(SeriesFrame::new(columns, timestamps, values, mask)?)
}

pub fn write_frame(path: &Path, frame: &SeriesFrame, config_hash: &str) -> Result<()> {
    write_text(path, &frame_to_csv(frame, Some(config_hash)))
}

/// Reads a frame CSV and the config hash it embeds.
pub fn read_frame(path: &Path) -> Result<(SeriesFrame, Option<String>)> {
    let text = read_text(path)?;
    Ok((frame_from_csv(path, &text)?, csv_config_hash(&text)))
}
