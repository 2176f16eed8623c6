//! Slice manifest and GraphViz export.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use slicecast_core::ingest::{demand_id, Topology};
use slicecast_core::slicing::{Route, Routing, SliceDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteEntry {
    pub demand: String,
    pub path: Vec<String>,
    pub links: Vec<String>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unrouted {
    pub demand: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceManifest {
    pub theta: f64,
    /// Sorted by slice id.
    pub slices: Vec<SliceDef>,
    pub routes: Vec<RouteEntry>,
    pub unrouted: Vec<Unrouted>,
}

impl SliceManifest {
    pub fn new(theta: f64, slices: Vec<SliceDef>, routing: &Routing) -> Self {
        let routes = routing
            .routes
            .iter()
            .map(|((s, t), r): (_, &Route)| RouteEntry {
                demand: demand_id(s, t),
                path: r.path.clone(),
                links: r.links.clone(),
                cost: r.cost,
            })
            .collect();
        let unrouted = routing
            .residue
            .iter()
            .map(|((s, t), e)| Unrouted {
                demand: demand_id(s, t),
                reason: e.to_string(),
            })
            .collect();
        Self {
            theta,
            slices,
            routes,
            unrouted,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Undirected graph of the topology with one coloured overlay edge per
/// (slice, footprint link). Node positions come from the coordinates.
pub fn topology_dot(topo: &Topology, slices: &[SliceDef], config_hash: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "// config_hash: {config_hash}");
    let _ = writeln!(out, "graph {} {{", quote(&topo.name));
    let _ = writeln!(out, "  node [shape=circle, fontsize=10];");
    for n in &topo.nodes {
        let _ = writeln!(
            out,
            "  {} [pos=\"{},{}!\"];",
            quote(&n.id),
            n.longitude,
            n.latitude
        );
    }
    let _ = writeln!(out, "  edge [color=\"#bbbbbb\"];");
    let links: BTreeMap<&str, (&str, &str)> = topo
        .links
        .iter()
        .map(|l| {
            (
                l.id.as_str(),
                (l.endpoint_a.as_str(), l.endpoint_b.as_str()),
            )
        })
        .collect();
    for l in &topo.links {
        let _ = writeln!(
            out,
            "  {} -- {} [label={}];",
            quote(&l.endpoint_a),
            quote(&l.endpoint_b),
            quote(&l.id)
        );
    }
    for (i, s) in slices.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for link in &s.footprint {
            if let Some((a, b)) = links.get(link.as_str()) {
                let _ = writeln!(
                    out,
                    "  {} -- {} [color={}, penwidth=3, tooltip={}];",
                    quote(a),
                    quote(b),
                    quote(color),
                    quote(&s.id)
                );
            }
        }
    }
    out.push_str("}\n");
    out
}
