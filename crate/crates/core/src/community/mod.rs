//! Community detection on the undirected, unweighted CA network and
//! evaluation against protocol labels.

mod eigenvector;
mod evaluate;
mod label_propagation;
mod modularity;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, WeightedDiGraph};
use crate::topology::{connected_components, ComponentMode};

pub use evaluate::{evaluate_partition, nmi, write_evaluation_table, EvaluationReport, NmiNorm, ProtocolMatch};

/// Undirected simple graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommunityGraph {
    nodes: Vec<NodeId>,
    adj: Vec<Vec<usize>>,
}

impl CommunityGraph {
    /// Builds a simple graph; self-loops and duplicate edges are dropped.
    pub fn from_edges(nodes: Vec<NodeId>, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); nodes.len()];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        CommunityGraph { nodes, adj }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }
}

/// Largest weak component with directions, weights, self-loops and
/// parallel edges removed.
pub fn prepare_community_graph(ca: &WeightedDiGraph) -> Result<CommunityGraph> {
    if ca.node_count() == 0 {
        return Err(Error::Invalid("cannot prepare an empty graph".into()));
    }
    let report = connected_components(ca, ComponentMode::Weak);
    let largest = &report.components[0];
    let mut remap = vec![usize::MAX; ca.node_count()];
    for (i, &v) in largest.iter().enumerate() {
        remap[v] = i;
    }
    let nodes = largest.iter().map(|&v| ca.node(v).clone()).collect();
    let edges = ca
        .edges()
        .into_iter()
        .filter(|&(s, d, _)| remap[s] != usize::MAX && remap[d] != usize::MAX)
        .map(|(s, d, _)| (remap[s], remap[d]));
    Ok(CommunityGraph::from_edges(nodes, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Louvain,
    Leiden,
    LabelPropagation,
    LeadingEigenvector,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Louvain,
        Algorithm::LabelPropagation,
        Algorithm::LeadingEigenvector,
        Algorithm::Leiden,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Louvain => "louvain",
            Algorithm::Leiden => "leiden",
            Algorithm::LabelPropagation => "label_propagation",
            Algorithm::LeadingEigenvector => "leading_eigenvector",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "louvain" | "multilevel" => Ok(Algorithm::Louvain),
            "leiden" => Ok(Algorithm::Leiden),
            "label_propagation" | "lpa" => Ok(Algorithm::LabelPropagation),
            "leading_eigenvector" | "eigenvector" => Ok(Algorithm::LeadingEigenvector),
            _ => Err(Error::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// Non-overlapping community assignment, indexed like the graph's nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl Partition {
    /// Community ids are renumbered in order of first appearance.
    pub fn new(algorithm: Algorithm, seed: u64, assignment: Vec<usize>) -> Self {
        Partition {
            algorithm,
            seed,
            assignment: renumber(&assignment).0,
        }
    }

    pub fn community_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

pub(crate) fn renumber(assignment: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = assignment
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

pub fn detect_communities(g: &CommunityGraph, algorithm: Algorithm, seed: u64) -> Partition {
    let assignment = match algorithm {
        Algorithm::Louvain => modularity::louvain(g, seed),
        Algorithm::Leiden => modularity::leiden(g, seed),
        Algorithm::LabelPropagation => label_propagation::label_propagation(g, seed),
        Algorithm::LeadingEigenvector => eigenvector::leading_eigenvector(g),
    };
    Partition::new(algorithm, seed, assignment)
}

/// Newman modularity at resolution 1.
pub fn modularity(g: &CommunityGraph, assignment: &[usize]) -> f64 {
    let m2 = (2 * g.edge_count()) as f64;
    if m2 == 0.0 {
        return 0.0;
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; k];
    let mut total = vec![0.0; k];
    for v in 0..g.node_count() {
        let c = assignment[v];
        total[c] += g.degree(v) as f64;
        internal[c] += g.neighbors(v).iter().filter(|&&u| assignment[u] == c).count() as f64;
    }
    internal
        .iter()
        .zip(&total)
        .map(|(e, t)| e / m2 - (t / m2).powi(2))
        .sum()
}
