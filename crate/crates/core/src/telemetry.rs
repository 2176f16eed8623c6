//! Replay clock and Prometheus text exposition (format 0.0.4) for
//! per-slice gauges.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::math;
use crate::preprocess::SeriesFrame;
use crate::Instant;

pub const METRIC_NAME: &str = "slice_traffic";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("speedup must be positive and finite, got {0}")]
    Speedup(f64),
    #[error("exposition line {line}: {message}")]
    Exposition { line: usize, message: String },
}

/// Maps elapsed wall-clock seconds to virtual frame time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayClock {
    start: Instant,
    speedup: f64,
}

impl ReplayClock {
    pub fn new(start: Instant, speedup: f64) -> Result<Self, TelemetryError> {
        if !(speedup > 0.0 && speedup.is_finite()) {
            return Err(TelemetryError::Speedup(speedup));
        }
        Ok(Self { start, speedup })
    }

    pub fn start(&self) -> Instant {
        self.start
    }

    pub fn speedup(&self) -> f64 {
        self.speedup
    }

    /// `start + ⌊elapsed · speedup⌋`; non-decreasing in `elapsed`.
    pub fn virtual_time(&self, elapsed_secs: f64) -> Instant {
        self.start + math::floor(elapsed_secs.max(0.0) * self.speedup) as Instant
    }
}

/// Index of the last row whose timestamp is at or before `t`.
pub fn sample_at(frame: &SeriesFrame, t: Instant) -> Option<usize> {
    frame
        .timestamps
        .partition_point(|&ts| ts <= t)
        .checked_sub(1)
}

fn escape_label(v: &str) -> String {
    let mut out = String::with_capacity(v.len());
    for ch in v.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Shortest text that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v == f64::INFINITY {
        "+Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        v.to_string()
    }
}

/// Exposition body for the frame row in effect at virtual time `t`. Before
/// the first row only the HELP and TYPE headers are emitted; masked cells
/// are skipped.
pub fn render_exposition(frame: &SeriesFrame, t: Instant) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# HELP {METRIC_NAME} Replayed traffic per network slice."
    );
    let _ = writeln!(out, "# TYPE {METRIC_NAME} gauge");
    if let Some(row) = sample_at(frame, t) {
        for (c, id) in frame.columns.iter().enumerate() {
            if frame.is_valid(row, c) {
                let _ = writeln!(
                    out,
                    "{METRIC_NAME}{{slice=\"{}\"}} {}",
                    escape_label(id),
                    format_value(frame.get(row, c))
                );
            }
        }
    }
    out
}

/// One parsed sample line.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub labels: Vec<(String, String)>,
    pub value: f64,
    pub timestamp: Option<i64>,
}

fn is_name(s: &str, colons: bool) -> bool {
    let mut chars = s.chars();
    let ok_first = |c: char| c.is_ascii_alphabetic() || c == '_' || (colons && c == ':');
    let ok_rest = |c: char| c.is_ascii_alphanumeric() || c == '_' || (colons && c == ':');
    matches!(chars.next(), Some(c) if ok_first(c)) && chars.all(ok_rest)
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "NaN" => Some(f64::NAN),
        "+Inf" | "Inf" => Some(f64::INFINITY),
        "-Inf" => Some(f64::NEG_INFINITY),
        _ if s
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')) =>
        {
            s.parse().ok()
        }
        _ => None,
    }
}

type Labels = Vec<(String, String)>;

/// Parses `{name="value",…}` starting after the `{`; returns labels and the
/// rest of the line after `}`.
fn parse_labels(s: &str) -> Result<(Labels, &str), String> {
    let mut labels = Vec::new();
    let mut rest = s;
    loop {
        rest = rest.trim_start();
        if let Some(r) = rest.strip_prefix('}') {
            return Ok((labels, r));
        }
        let eq = rest.find('=').ok_or("label without `=`")?;
        let name = rest[..eq].trim();
        if !is_name(name, false) {
            return Err(format!("invalid label name `{name}`"));
        }
        rest = rest[eq + 1..].trim_start();
        rest = rest.strip_prefix('"').ok_or("label value must be quoted")?;
        let mut value = String::new();
        let mut chars = rest.char_indices();
        let end = loop {
            match chars.next() {
                None => return Err("unterminated label value".into()),
                Some((i, '"')) => break i,
                Some((_, '\\')) => match chars.next() {
                    Some((_, '\\')) => value.push('\\'),
                    Some((_, '"')) => value.push('"'),
                    Some((_, 'n')) => value.push('\n'),
                    _ => return Err("invalid escape in label value".into()),
                },
                Some((_, c)) => value.push(c),
            }
        };
        if labels.iter().any(|(n, _)| n == name) {
            return Err(format!("duplicate label `{name}`"));
        }
        labels.push((name.to_string(), value));
        rest = rest[end + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r;
        } else if !rest.starts_with('}') {
            return Err("expected `,` or `}` after label".into());
        }
    }
}

/// Validates a text-format exposition body and returns its samples.
///
/// Checks: newline-terminated body, well-formed HELP/TYPE comments, at most
/// one TYPE per metric and before its samples, valid metric and label
/// names, quoted and escaped label values, float values and optional
/// integer timestamps, no duplicate series.
pub fn parse_exposition(body: &str) -> Result<Vec<Sample>, TelemetryError> {
    let err = |line: usize, message: String| TelemetryError::Exposition { line, message };
    if !body.is_empty() && !body.ends_with('\n') {
        return Err(err(
            body.lines().count(),
            "body must end with a newline".into(),
        ));
    }
    let mut typed = BTreeSet::new();
    let mut sampled = BTreeSet::new();
    let mut series = BTreeSet::new();
    let mut samples = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.trim_start().splitn(3, ' ');
            match parts.next() {
                Some("HELP") => {
                    let name = parts.next().unwrap_or("");
                    if !is_name(name, true) {
                        return Err(err(n, format!("invalid metric name `{name}` in HELP")));
                    }
                }
                Some("TYPE") => {
                    let name = parts.next().unwrap_or("");
                    let kind = parts.next().unwrap_or("").trim();
                    if !is_name(name, true) {
                        return Err(err(n, format!("invalid metric name `{name}` in TYPE")));
                    }
                    if !matches!(
                        kind,
                        "counter" | "gauge" | "histogram" | "summary" | "untyped"
                    ) {
                        return Err(err(n, format!("unknown metric type `{kind}`")));
                    }
                    if sampled.contains(name) {
                        return Err(err(n, format!("TYPE for `{name}` after its samples")));
                    }
                    if !typed.insert(name.to_string()) {
                        return Err(err(n, format!("second TYPE line for `{name}`")));
                    }
                }
                _ => {}
            }
            continue;
        }
        let name_end = line
            .find(['{', ' ', '\t'])
            .ok_or_else(|| err(n, "sample line has no value".into()))?;
        let name = &line[..name_end];
        if !is_name(name, true) {
            return Err(err(n, format!("invalid metric name `{name}`")));
        }
        let (labels, rest) = if let Some(r) = line[name_end..].strip_prefix('{') {
            parse_labels(r).map_err(|m| err(n, m))?
        } else {
            (Vec::new(), &line[name_end..])
        };
        let mut fields = rest.split_whitespace();
        let value = fields
            .next()
            .and_then(parse_float)
            .ok_or_else(|| err(n, "missing or invalid sample value".into()))?;
        let timestamp = match fields.next() {
            None => None,
            Some(ts) => Some(
                ts.parse::<i64>()
                    .map_err(|_| err(n, format!("invalid timestamp `{ts}`")))?,
            ),
        };
        if fields.next().is_some() {
            return Err(err(n, "trailing tokens after sample".into()));
        }
        let mut key: Vec<(String, String)> = labels.clone();
        key.sort();
        if !series.insert((name.to_string(), key)) {
            return Err(err(n, format!("duplicate series for `{name}`")));
        }
        sampled.insert(name.to_string());
        samples.push(Sample {
            name: name.to_string(),
            labels,
            value,
            timestamp,
        });
    }
    Ok(samples)
}
