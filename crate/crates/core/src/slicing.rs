//! Shortest-path routing of demands and consolidation of common-path
//! traffic into slices.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};

use crate::ingest::{demand_id, DemandSeries, Topology};
use crate::preprocess::SeriesFrame;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SlicingError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no path from `{from}` to `{to}`")]
    NoPath { from: String, to: String },
    #[error("slice `{slice}` needs column `{column}`, which the frame lacks")]
    MissingColumn { slice: String, column: String },
    #[error("merge threshold {0} outside [0, 1]")]
    Threshold(f64),
    #[error("no routes to form slices from")]
    NoRoutes,
}

pub type DemandKey = (String, String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub source: String,
    pub target: String,
    /// Node ids from source to target inclusive; empty when they coincide.
    pub path: Vec<String>,
    pub links: Vec<String>,
    pub cost: f64,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

#[derive(Clone)]
struct Label {
    cost: f64,
    nodes: Vec<usize>,
    links: Vec<usize>,
}

/// Ordering key: cost, hop count, node-id sequence, link-id sequence.
struct Key<'a> {
    label: Label,
    topo: &'a Topology,
}

fn compare(topo: &Topology, a: &Label, b: &Label) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.links.len().cmp(&b.links.len()))
        .then_with(|| {
            let ia = a.nodes.iter().map(|&n| topo.nodes[n].id.as_str());
            let ib = b.nodes.iter().map(|&n| topo.nodes[n].id.as_str());
            ia.cmp(ib)
        })
        .then_with(|| {
            let ia = a.links.iter().map(|&l| topo.links[l].id.as_str());
            let ib = b.links.iter().map(|&l| topo.links[l].id.as_str());
            ia.cmp(ib)
        })
}

impl PartialEq for Key<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key<'_> {}
impl PartialOrd for Key<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        compare(self.topo, &self.label, &other.label)
    }
}

/// Best label to every node from `source` (Dijkstra over directed arcs).
fn single_source(topo: &Topology, source: usize) -> Vec<Option<Label>> {
    let adj = topo.adjacency();
    let mut best: Vec<Option<Label>> = vec![None; topo.nodes.len()];
    let mut done = vec![false; topo.nodes.len()];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Key {
        label: Label {
            cost: 0.0,
            nodes: vec![source],
            links: Vec::new(),
        },
        topo,
    }));
    while let Some(Reverse(Key { label, .. })) = heap.pop() {
        let at = *label.nodes.last().expect("non-empty path");
        if done[at] {
            continue;
        }
        done[at] = true;
        for arc in &adj[at] {
            if done[arc.to] {
                continue;
            }
            let mut next = label.clone();
            next.cost += arc.cost;
            next.nodes.push(arc.to);
            next.links.push(arc.link);
            let better = match &best[arc.to] {
                None => true,
                Some(cur) => compare(topo, &next, cur) == Ordering::Less,
            };
            if better {
                best[arc.to] = Some(next.clone());
                heap.push(Reverse(Key { label: next, topo }));
            }
        }
        best[at] = Some(label);
    }
    best
}

fn to_route(topo: &Topology, source: &str, target: &str, label: &Label) -> Route {
    if source == target {
        return Route {
            source: source.into(),
            target: target.into(),
            path: Vec::new(),
            links: Vec::new(),
            cost: 0.0,
        };
    }
    Route {
        source: source.into(),
        target: target.into(),
        path: label
            .nodes
            .iter()
            .map(|&n| topo.nodes[n].id.clone())
            .collect(),
        links: label
            .links
            .iter()
            .map(|&l| topo.links[l].id.clone())
            .collect(),
        cost: label.cost,
    }
}

fn index(topo: &Topology, id: &str) -> Result<usize, SlicingError> {
    topo.node_index(id)
        .ok_or_else(|| SlicingError::UnknownNode(id.to_string()))
}

/// Minimum-cost route; ties go to fewer hops, then the lexicographically
/// smallest node sequence.
pub fn shortest_path(topo: &Topology, source: &str, target: &str) -> Result<Route, SlicingError> {
    let s = index(topo, source)?;
    let t = index(topo, target)?;
    let labels = single_source(topo, s);
    labels[t]
        .as_ref()
        .map(|l| to_route(topo, source, target, l))
        .ok_or_else(|| SlicingError::NoPath {
            from: source.into(),
            to: target.into(),
        })
}

/// Routed demands plus those that could not be routed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Routing {
    pub routes: BTreeMap<DemandKey, Route>,
    pub residue: Vec<(DemandKey, SlicingError)>,
}

/// Routes every distinct demand pair; failures land in `residue`.
pub fn route_all(topo: &Topology, demands: &[DemandSeries]) -> Routing {
    let pairs: BTreeSet<DemandKey> = demands
        .iter()
        .map(|d| (d.source.clone(), d.target.clone()))
        .collect();
    let mut out = Routing::default();
    let mut cache: BTreeMap<usize, Vec<Option<Label>>> = BTreeMap::new();
    for (source, target) in pairs {
        let endpoints = index(topo, &source).and_then(|s| Ok((s, index(topo, &target)?)));
        let (s, t) = match endpoints {
            Ok(st) => st,
            Err(e) => {
                out.residue.push(((source, target), e));
                continue;
            }
        };
        let labels = cache.entry(s).or_insert_with(|| single_source(topo, s));
        match &labels[t] {
            Some(l) => {
                let route = to_route(topo, &source, &target, l);
                out.routes.insert((source, target), route);
            }
            None => {
                let e = SlicingError::NoPath {
                    from: source.clone(),
                    to: target.clone(),
                };
                out.residue.push(((source, target), e));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceDef {
    pub id: String,
    /// Sorted member demands.
    pub members: Vec<DemandKey>,
    /// Sorted link ids used by any member route.
    pub footprint: Vec<String>,
    /// Smallest capacity among footprint links.
    pub capacity: f64,
}

impl SliceDef {
    pub fn member_columns(&self) -> Vec<String> {
        self.members.iter().map(|(s, t)| demand_id(s, t)).collect()
    }
}

fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic id from the sorted member list.
pub fn slice_id(members: &[DemandKey]) -> String {
    let joined = members
        .iter()
        .map(|(s, t)| demand_id(s, t))
        .collect::<Vec<_>>()
        .join(",");
    format!("slice-{:016x}", fnv1a(joined.bytes()))
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups demands with identical link sets, then merges groups whose
/// footprints have Jaccard similarity at least `theta`, transitively.
///
/// Routes without links (source equals target) carry no traffic over the
/// network and are left out with a warning.
pub fn form_slices(
    topo: &Topology,
    routes: &BTreeMap<DemandKey, Route>,
    theta: f64,
) -> Result<Vec<SliceDef>, SlicingError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(SlicingError::Threshold(theta));
    }
    if routes.is_empty() {
        return Err(SlicingError::NoRoutes);
    }
    let mut groups: BTreeMap<BTreeSet<String>, Vec<DemandKey>> = BTreeMap::new();
    for (key, route) in routes {
        if route.links.is_empty() {
            log::warn!(
                "demand {} has an empty route and joins no slice",
                demand_id(&key.0, &key.1)
            );
            continue;
        }
        let links: BTreeSet<String> = route.links.iter().cloned().collect();
        groups.entry(links).or_default().push(key.clone());
    }
    let groups: Vec<(BTreeSet<String>, Vec<DemandKey>)> = groups.into_iter().collect();
    let mut parent: Vec<usize> = (0..groups.len()).collect();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            if jaccard(&groups[i].0, &groups[j].0) >= theta {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut merged: BTreeMap<usize, (BTreeSet<String>, BTreeSet<DemandKey>)> = BTreeMap::new();
    for (i, (links, members)) in groups.iter().enumerate() {
        let root = find(&mut parent, i);
        let entry = merged.entry(root).or_default();
        entry.0.extend(links.iter().cloned());
        entry.1.extend(members.iter().cloned());
    }
    let mut slices: Vec<SliceDef> = merged
        .into_values()
        .map(|(links, members)| {
            let members: Vec<DemandKey> = members.into_iter().collect();
            let capacity = links
                .iter()
                .filter_map(|l| topo.link_index(l))
                .map(|i| topo.links[i].capacity)
                .fold(f64::INFINITY, f64::min);
            SliceDef {
                id: slice_id(&members),
                members,
                footprint: links.into_iter().collect(),
                capacity,
            }
        })
        .collect();
    slices.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(slices)
}

/// One column per slice holding the sum of its member columns, in member
/// order. A cell is valid only if every member cell is.
pub fn slice_series(slices: &[SliceDef], frame: &SeriesFrame) -> Result<SeriesFrame, SlicingError> {
    let mut member_idx = Vec::with_capacity(slices.len());
    for s in slices {
        let idx = s
            .member_columns()
            .into_iter()
            .map(|c| {
                frame
                    .column_index(&c)
                    .ok_or_else(|| SlicingError::MissingColumn {
                        slice: s.id.clone(),
                        column: c,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        member_idx.push(idx);
    }
    let mut values = Vec::with_capacity(frame.rows() * slices.len());
    let mut mask = Vec::with_capacity(values.capacity());
    for r in 0..frame.rows() {
        for idx in &member_idx {
            let mut sum = 0.0;
            let mut valid = true;
            for &c in idx {
                sum += frame.get(r, c);
                valid &= frame.is_valid(r, c);
            }
            values.push(sum);
            mask.push(valid);
        }
    }
    Ok(SeriesFrame {
        columns: slices.iter().map(|s| s.id.clone()).collect(),
        timestamps: frame.timestamps.clone(),
        values,
        mask,
    })
}
