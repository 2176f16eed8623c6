//! SNDlib native files on disk: one network file plus a directory of demand
//! snapshots whose names carry `YYYYMMDD-HHMM` UTC timestamps.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use chrono::NaiveDateTime;
use regex::Regex;
use slicecast_core::ingest::{
    parse_demand_archive, parse_demand_matrix, parse_topology, DemandSeries, IngestError, Topology,
    TopologyParse,
};
use slicecast_core::Instant;

use crate::error::{Error, Result};
use crate::formats::read_text;

fn stamp_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d{8})-(\d{4})").expect("valid pattern"))
}

/// Timestamp from the last `YYYYMMDD-HHMM` group in a file name.
pub fn timestamp_from_name(name: &str) -> Option<Instant> {
    let caps = stamp_pattern().captures_iter(name).last()?;
    let text = format!("{}{}", &caps[1], &caps[2]);
    NaiveDateTime::parse_from_str(&text, "%Y%m%d%H%M")
        .ok()
        .map(|d| d.and_utc().timestamp())
}

/// `<prefix>-YYYYMMDD-HHMM.txt`.
pub fn snapshot_file_name(prefix: &str, t: Instant) -> String {
    let d = chrono::DateTime::from_timestamp(t, 0).expect("instant in chrono range");
    format!("{prefix}-{}.txt", d.format("%Y%m%d-%H%M"))
}

pub fn read_topology(path: &Path) -> Result<TopologyParse> {
    let text = read_text(path)?;
    parse_topology(&text).map_err(|e| match e {
        IngestError::Parse { line, message } => {
            Error::format(path, format!("line {line}: {message}"))
        }
        other => other.into(),
    })
}

/// Snapshot files in `dir` with a parseable timestamp, sorted by name.
/// Files without one are skipped with a warning.
pub fn snapshot_files(dir: &Path) -> Result<Vec<(PathBuf, Instant)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        match timestamp_from_name(&name) {
            Some(t) => files.push((path, t)),
            None => log::warn!(
                "skipping {}: no YYYYMMDD-HHMM timestamp in name",
                path.display()
            ),
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every snapshot in `dir` into per-pair series.
pub fn read_archive(dir: &Path, topology: Option<&Topology>) -> Result<Vec<DemandSeries>> {
    let files = snapshot_files(dir)?;
    if files.is_empty() {
        return Err(Error::format(dir, "no demand snapshots found"));
    }
    let texts = files
        .iter()
        .map(|(p, _)| read_text(p))
        .collect::<Result<Vec<_>>>()?;
    let docs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let stamps: Vec<Instant> = files.iter().map(|(_, t)| *t).collect();
    match parse_demand_archive(&docs, &stamps, topology) {
        Ok(series) => Ok(series),
        Err(IngestError::Parse { .. }) => {
            // re-parse individually to report the offending file
            for ((path, _), doc) in files.iter().zip(&docs) {
                if let Err(IngestError::Parse { line, message }) = parse_demand_matrix(doc) {
                    return Err(Error::format(path, format!("line {line}: {message}")));
                }
            }
            Err(Error::format(dir, "unparseable demand archive"))
        }
        Err(e) => Err(e.into()),
    }
}
