//! Policy intent documents.
//!
//! JSON schema (version 1), keys in this order:
//!
//! ```text
//! { "version": 1, "issued_at": "<RFC 3339>", "config_hash": "<hex>",
//!   "actions": [ { "slice", "action", "current_capacity", "target_capacity",
//!                  "trigger", "effective_at", "rationale" } ] }
//! ```
//!
//! `action` is `scale-up`, `scale-down` or `hold`; holds are always listed.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use slicecast_core::policy::{ActionKind, PolicyAction};
use slicecast_core::Instant;

use crate::formats::{format_instant, to_json};

pub const POLICY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyFormat {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unsupported policy format `{0}` (expected `json` or `table`)")]
pub struct UnsupportedFormat(pub String);

impl FromStr for PolicyFormat {
    type Err = UnsupportedFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "table" => Ok(Self::Table),
            other => Err(UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRecord {
    pub slice: String,
    pub action: ActionKind,
    pub current_capacity: f64,
    pub target_capacity: f64,
    pub trigger: f64,
    pub effective_at: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub version: u32,
    pub issued_at: String,
    pub config_hash: String,
    pub actions: Vec<ActionRecord>,
}

impl PolicyDocument {
    pub fn new(actions: &[PolicyAction], issued_at: Instant, config_hash: &str) -> Self {
        Self {
            version: POLICY_VERSION,
            issued_at: format_instant(issued_at),
            config_hash: config_hash.to_string(),
            actions: actions
                .iter()
                .map(|a| ActionRecord {
                    slice: a.slice.clone(),
                    action: a.action,
                    current_capacity: a.current_capacity,
                    target_capacity: a.target_capacity,
                    trigger: a.trigger,
                    effective_at: format_instant(a.effective_at),
                    rationale: a.rationale.clone(),
                })
                .collect(),
        }
    }
}

/// Renders `actions` in the order given.
pub fn render_policy(
    actions: &[PolicyAction],
    issued_at: Instant,
    config_hash: &str,
    format: PolicyFormat,
) -> String {
    let doc = PolicyDocument::new(actions, issued_at, config_hash);
    match format {
        PolicyFormat::Json => to_json(&doc),
        PolicyFormat::Table => render_table(&doc),
    }
}

/// Like [`render_policy`] with the format given as a tag.
pub fn render_policy_tag(
    actions: &[PolicyAction],
    issued_at: Instant,
    config_hash: &str,
    format: &str,
) -> Result<String, UnsupportedFormat> {
    Ok(render_policy(
        actions,
        issued_at,
        config_hash,
        format.parse()?,
    ))
}

fn render_table(doc: &PolicyDocument) -> String {
    let header = [
        "slice",
        "action",
        "current",
        "target",
        "peak",
        "effective_at",
    ];
    let rows: Vec<[String; 6]> = doc
        .actions
        .iter()
        .map(|a| {
            [
                a.slice.clone(),
                a.action.as_str().to_string(),
                a.current_capacity.to_string(),
                a.target_capacity.to_string(),
                format!("{:.3}", a.trigger),
                a.effective_at.clone(),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for r in &rows {
        for (w, cell) in width.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "policy v{} issued {}", doc.version, doc.issued_at);
    let line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let _ = writeln!(out, "{}", line(&header));
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}", line(&cells));
    }
    if rows.is_empty() {
        out.push_str("(no actions)\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold() -> PolicyAction {
        PolicyAction {
            slice: "s1".into(),
            action: ActionKind::Hold,
            current_capacity: 100.0,
            target_capacity: 100.0,
            trigger: 50.0,
            effective_at: 1_704_067_200,
            rationale: "peak within thresholds".into(),
        }
    }

    #[test]
    fn empty_document_is_valid_json() {
        let text = render_policy(&[], 0, "h", PolicyFormat::Json);
        let doc: PolicyDocument = serde_json::from_str(&text).unwrap();
        assert!(doc.actions.is_empty());
        assert_eq!(doc.version, POLICY_VERSION);
    }

    #[test]
    fn holds_are_kept_and_rendering_is_stable() {
        let a = render_policy(&[hold()], 5, "h", PolicyFormat::Json);
        let b = render_policy(&[hold()], 5, "h", PolicyFormat::Json);
        assert_eq!(a, b);
        let doc: PolicyDocument = serde_json::from_str(&a).unwrap();
        assert_eq!(doc.actions[0].action, ActionKind::Hold);
        let keys: Vec<&str> = [
            "\"version\"",
            "\"issued_at\"",
            "\"config_hash\"",
            "\"actions\"",
        ]
        .to_vec();
        let pos: Vec<usize> = keys.iter().map(|k| a.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let t = render_policy(&[hold()], 5, "h", PolicyFormat::Table);
        assert!(t.contains("s1") && t.contains("hold"));
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert_eq!(
            render_policy_tag(&[], 0, "h", "yaml").unwrap_err(),
            UnsupportedFormat("yaml".into())
        );
    }
}
