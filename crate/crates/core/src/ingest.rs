//! SNDlib native-format parsing: network topology and demand snapshots.
//!
//! A native document is a sequence of sections, each `NAME (` … `)`, with
//! one entry per line and `#` comments:
//!
//! ```text
//! NODES (
//!   A ( -84.38 33.75 )
//! )
//! LINKS (
//!   L1 ( A B ) 9920000.00 0.00 1.00 0.00 ( 40000.00 0.00 )
//! )
//! DEMANDS (
//!   A_B ( A B ) 1 0.000062 UNLIMITED
//! )
//! ```
//!
//! Links are undirected; [`Topology::arcs`] expands each one into two
//! directed arcs with the same capacity and cost.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::Instant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("link `{link}` references unknown node `{node}`")]
    DanglingEndpoint { link: String, node: String },
    #[error("link `{link}`: {message}")]
    InvalidLink { link: String, message: String },
    #[error("demand ({origin}, {destination}) references a node absent from the topology")]
    UnknownDemandNode { origin: String, destination: String },
    #[error("demand ({origin}, {destination}) has invalid value {value}")]
    InvalidDemand {
        origin: String,
        destination: String,
        value: f64,
    },
    #[error("demand archive is empty")]
    EmptyArchive,
    #[error("{documents} documents but {timestamps} timestamps")]
    TimestampCount { documents: usize, timestamps: usize },
    #[error("timestamp {0} appears more than once")]
    DuplicateTimestamp(Instant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub longitude: f64,
    pub latitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    pub capacity: f64,
    pub routing_cost: f64,
}

/// Directed arc produced from an undirected [`Link`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub link: usize,
    pub from: usize,
    pub to: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    /// Whether every node can reach every other node.
    pub connected: bool,
}

impl Topology {
    /// Builds a topology from parts, validating every invariant.
    pub fn new(name: String, nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, IngestError> {
        let mut seen = BTreeSet::new();
        for n in &nodes {
            if !seen.insert(n.id.as_str()) {
                return Err(IngestError::DuplicateNode(n.id.clone()));
            }
        }
        let mut link_ids = BTreeSet::new();
        for l in &links {
            if !link_ids.insert(l.id.as_str()) {
                return Err(IngestError::DuplicateLink(l.id.clone()));
            }
            for end in [&l.endpoint_a, &l.endpoint_b] {
                if !seen.contains(end.as_str()) {
                    return Err(IngestError::DanglingEndpoint {
                        link: l.id.clone(),
                        node: end.clone(),
                    });
                }
            }
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                return Err(IngestError::InvalidLink {
                    link: l.id.clone(),
                    message: format!("capacity must be positive, got {}", l.capacity),
                });
            }
            if !(l.routing_cost >= 0.0 && l.routing_cost.is_finite()) {
                return Err(IngestError::InvalidLink {
                    link: l.id.clone(),
                    message: format!("routing cost must be non-negative, got {}", l.routing_cost),
                });
            }
        }
        let mut topo = Self {
            name,
            nodes,
            links,
            connected: false,
        };
        topo.connected = topo.check_connected();
        Ok(topo)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Both directions of every link, in link order.
    pub fn arcs(&self) -> Vec<Arc> {
        let index: BTreeMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut arcs = Vec::with_capacity(2 * self.links.len());
        for (li, l) in self.links.iter().enumerate() {
            let a = index[l.endpoint_a.as_str()];
            let b = index[l.endpoint_b.as_str()];
            arcs.push(Arc {
                link: li,
                from: a,
                to: b,
                cost: l.routing_cost,
            });
            arcs.push(Arc {
                link: li,
                from: b,
                to: a,
                cost: l.routing_cost,
            });
        }
        arcs
    }

    /// Outgoing arcs per node index.
    pub fn adjacency(&self) -> Vec<Vec<Arc>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for arc in self.arcs() {
            adj[arc.from].push(arc);
        }
        adj
    }

    fn check_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(n) = queue.pop_front() {
            for arc in &adj[n] {
                if !seen[arc.to] {
                    seen[arc.to] = true;
                    queue.push_back(arc.to);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Native-format text that [`parse_topology`] reads back to an equal value.
    pub fn to_native(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "?SNDlib native format; type: network; version: 1.0");
        let _ = writeln!(out, "# network {}\n", self.name);
        let _ = writeln!(out, "NODES (");
        for n in &self.nodes {
            let _ = writeln!(out, "  {} ( {} {} )", n.id, n.longitude, n.latitude);
        }
        let _ = writeln!(out, ")\n\nLINKS (");
        for l in &self.links {
            let _ = writeln!(
                out,
                "  {} ( {} {} ) {} 0 {} 0 ( )",
                l.id, l.endpoint_a, l.endpoint_b, l.capacity, l.routing_cost
            );
        }
        let _ = writeln!(out, ")");
        out
    }
}

/// Parsed topology plus the non-fatal issues found while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyParse {
    pub topology: Topology,
    pub warnings: Vec<String>,
}

/// One timestamped origin-destination traffic series.
///
/// `values[i]` is `None` where the pair was absent from snapshot `i`; gaps are
/// kept as-is here and only filled during preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub source: String,
    pub target: String,
    pub timestamps: Vec<Instant>,
    pub values: Vec<Option<f64>>,
    /// Modal spacing of consecutive timestamps in seconds.
    pub cadence: Option<i64>,
}

impl DemandSeries {
    /// Column identifier used in frames: `source->target`.
    pub fn id(&self) -> String {
        demand_id(&self.source, &self.target)
    }

    pub fn gap_indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn gap_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

pub fn demand_id(source: &str, target: &str) -> String {
    format!("{source}->{target}")
}

/// Modal difference between consecutive timestamps; ties go to the smaller
/// spacing.
pub fn infer_cadence(timestamps: &[Instant]) -> Option<i64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in timestamps.windows(2) {
        *counts.entry(w[1] - w[0]).or_default() += 1;
    }
    let mut best: Option<(i64, usize)> = None;
    for (d, c) in counts {
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((d, c));
        }
    }
    best.map(|(d, _)| d)
}

/// One `DEMANDS` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEntry {
    pub id: String,
    pub source: String,
    pub target: String,
    pub value: f64,
}

struct Section<'a> {
    name: &'a str,
    /// (1-based line number, tokens)
    entries: Vec<(usize, Vec<&'a str>)>,
}

fn tokenize(line: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch == '(' || ch == ')' || ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(&line[s..i]);
            }
            if ch != ' ' && !ch.is_whitespace() {
                tokens.push(&line[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(&line[s..]);
    }
    tokens
}

fn sections(doc: &str) -> Result<Vec<Section<'_>>, IngestError> {
    let mut out: Vec<Section<'_>> = Vec::new();
    let mut open: Option<(usize, Section<'_>)> = None;
    for (i, raw) in doc.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('?') {
            continue;
        }
        let tokens = tokenize(line);
        match &mut open {
            None => {
                if tokens.len() == 2 && tokens[1] == "(" {
                    open = Some((
                        line_no,
                        Section {
                            name: tokens[0],
                            entries: Vec::new(),
                        },
                    ));
                } else {
                    return Err(IngestError::Parse {
                        line: line_no,
                        message: format!("expected `SECTION (`, found `{line}`"),
                    });
                }
            }
            Some((_, section)) => {
                if tokens == [")"] {
                    let (_, done) = open.take().expect("open section");
                    out.push(done);
                } else {
                    section.entries.push((line_no, tokens));
                }
            }
        }
    }
    if let Some((line, s)) = open {
        return Err(IngestError::Parse {
            line,
            message: format!("section `{}` is never closed", s.name),
        });
    }
    Ok(out)
}

fn number(tok: Option<&&str>, line: usize, what: &str) -> Result<f64, IngestError> {
    let tok = tok.ok_or_else(|| IngestError::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse::<f64>().map_err(|_| IngestError::Parse {
        line,
        message: format!("invalid {what} `{tok}`"),
    })
}

/// `ID ( A B ) rest…` → (id, a, b, rest).
fn endpoints<'a>(
    tokens: &[&'a str],
    line: usize,
) -> Result<(&'a str, &'a str, &'a str, Vec<&'a str>), IngestError> {
    if tokens.len() < 5 || tokens[1] != "(" || tokens[4] != ")" {
        return Err(IngestError::Parse {
            line,
            message: "expected `ID ( SOURCE TARGET ) …`".to_string(),
        });
    }
    Ok((tokens[0], tokens[2], tokens[3], tokens[5..].to_vec()))
}

/// Parses the `NODES` and `LINKS` sections of a native network document.
pub fn parse_topology(document: &str) -> Result<TopologyParse, IngestError> {
    let mut warnings = Vec::new();
    let mut name = String::new();
    for line in document.lines() {
        if let Some(rest) = line.trim().strip_prefix("# network ") {
            name = rest.trim().to_string();
            break;
        }
    }
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut saw_nodes = false;
    for section in sections(document)? {
        match section.name {
            "NODES" => {
                saw_nodes = true;
                for (line, tokens) in section.entries {
                    if tokens.len() < 5 || tokens[1] != "(" || tokens[4] != ")" {
                        return Err(IngestError::Parse {
                            line,
                            message: "expected `ID ( LONGITUDE LATITUDE )`".to_string(),
                        });
                    }
                    if tokens.len() > 5 {
                        warnings.push(format!("line {line}: ignored extra node attributes"));
                    }
                    nodes.push(Node {
                        id: tokens[0].to_string(),
                        longitude: number(tokens.get(2), line, "longitude")?,
                        latitude: number(tokens.get(3), line, "latitude")?,
                    });
                }
            }
            "LINKS" => {
                for (line, tokens) in section.entries {
                    let (id, a, b, rest) = endpoints(&tokens, line)?;
                    // pre_installed_capacity pre_installed_capacity_cost routing_cost setup_cost ( modules )
                    let scalars: Vec<&str> =
                        rest.iter().copied().take_while(|t| *t != "(").collect();
                    let modules: Vec<&str> = rest
                        .iter()
                        .copied()
                        .skip_while(|t| *t != "(")
                        .filter(|t| *t != "(" && *t != ")")
                        .collect();
                    let pre_installed = match scalars.first() {
                        Some(_) => number(scalars.first(), line, "capacity")?,
                        None => 0.0,
                    };
                    let routing_cost = match scalars.get(2) {
                        Some(_) => number(scalars.get(2), line, "routing cost")?,
                        None => {
                            warnings.push(format!(
                                "line {line}: link {id} has no routing cost, using 1.0"
                            ));
                            1.0
                        }
                    };
                    if scalars.len() > 4 {
                        warnings.push(format!("line {line}: ignored extra link attributes"));
                    }
                    let mut capacity = pre_installed;
                    if capacity <= 0.0 {
                        // fall back to the largest installable module
                        let mut best = 0.0f64;
                        for pair in modules.chunks(2) {
                            best = best.max(number(pair.first(), line, "module capacity")?);
                        }
                        if best > 0.0 {
                            warnings.push(format!(
                                "line {line}: link {id} has no pre-installed capacity, using module capacity {best}"
                            ));
                        }
                        capacity = best;
                    }
                    links.push(Link {
                        id: id.to_string(),
                        endpoint_a: a.to_string(),
                        endpoint_b: b.to_string(),
                        capacity,
                        routing_cost,
                    });
                }
            }
            "META" | "DEMANDS" | "ADMISSIBLE_PATHS" => {}
            other => warnings.push(format!("ignored unknown section `{other}`")),
        }
    }
    if !saw_nodes {
        return Err(IngestError::Parse {
            line: 0,
            message: "document has no NODES section".to_string(),
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(TopologyParse {
        topology: Topology::new(name, nodes, links)?,
        warnings,
    })
}

/// Reads the `DEMANDS` section of one snapshot. Repeated pairs are summed.
pub fn parse_demand_matrix(document: &str) -> Result<Vec<DemandEntry>, IngestError> {
    let mut entries: Vec<DemandEntry> = Vec::new();
    let mut by_pair: BTreeMap<(String, String), usize> = BTreeMap::new();
    for section in sections(document)? {
        if section.name != "DEMANDS" {
            continue;
        }
        for (line, tokens) in section.entries {
            let (id, s, t, rest) = endpoints(&tokens, line)?;
            // routing_unit demand_value max_path_length
            let value = number(rest.get(1), line, "demand value")?;
            if !(value >= 0.0 && value.is_finite()) {
                return Err(IngestError::InvalidDemand {
                    origin: s.to_string(),
                    destination: t.to_string(),
                    value,
                });
            }
            let key = (s.to_string(), t.to_string());
            if let Some(&i) = by_pair.get(&key) {
                log::warn!("line {line}: repeated demand ({s}, {t}) summed");
                entries[i].value += value;
            } else {
                by_pair.insert(key, entries.len());
                entries.push(DemandEntry {
                    id: id.to_string(),
                    source: s.to_string(),
                    target: t.to_string(),
                    value,
                });
            }
        }
    }
    Ok(entries)
}

/// Assembles per-pair series from demand snapshots.
///
/// Snapshots are sorted by timestamp first, so input order does not matter.
/// Every pair seen in any snapshot gets a series spanning all snapshot
/// instants, with `None` where that snapshot lacks the pair. When a
/// topology is supplied every endpoint must be one of its nodes.
pub fn parse_demand_archive(
    documents: &[&str],
    timestamps: &[Instant],
    topology: Option<&Topology>,
) -> Result<Vec<DemandSeries>, IngestError> {
    if documents.len() != timestamps.len() {
        return Err(IngestError::TimestampCount {
            documents: documents.len(),
            timestamps: timestamps.len(),
        });
    }
    if documents.is_empty() {
        return Err(IngestError::EmptyArchive);
    }
    let mut order: Vec<usize> = (0..documents.len()).collect();
    order.sort_by_key(|&i| timestamps[i]);
    for w in order.windows(2) {
        if timestamps[w[0]] == timestamps[w[1]] {
            return Err(IngestError::DuplicateTimestamp(timestamps[w[0]]));
        }
    }
    let sorted_ts: Vec<Instant> = order.iter().map(|&i| timestamps[i]).collect();
    let cadence = infer_cadence(&sorted_ts);
    let nodes: Option<BTreeSet<&str>> =
        topology.map(|t| t.nodes.iter().map(|n| n.id.as_str()).collect());

    let mut series: BTreeMap<(String, String), Vec<Option<f64>>> = BTreeMap::new();
    for (row, &doc_index) in order.iter().enumerate() {
        for entry in parse_demand_matrix(documents[doc_index])? {
            if let Some(nodes) = &nodes {
                if !nodes.contains(entry.source.as_str()) || !nodes.contains(entry.target.as_str())
                {
                    return Err(IngestError::UnknownDemandNode {
                        origin: entry.source,
                        destination: entry.target,
                    });
                }
            }
            let values = series
                .entry((entry.source, entry.target))
                .or_insert_with(|| vec![None; order.len()]);
            values[row] = Some(entry.value);
        }
    }
    Ok(series
        .into_iter()
        .map(|((source, target), values)| DemandSeries {
            source,
            target,
            timestamps: sorted_ts.clone(),
            values,
            cadence,
        })
        .collect())
}
