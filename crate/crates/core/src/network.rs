//! Aggregated interaction networks at code-account and protocol granularity.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Diagnostics, Error, Result};
use crate::ground_truth::{Category, ExtendedSeedSet};
use crate::ingest::{ContractRegistry, TraceTree};
use crate::types::Address;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Protocol(String),
    Address(Address),
}

impl NodeId {
    pub fn parse(s: &str) -> NodeId {
        match s.parse::<Address>() {
            Ok(a) if s.starts_with("0x") => NodeId::Address(a),
            _ => NodeId::Protocol(s.to_string()),
        }
    }

    pub fn address(&self) -> Option<Address> {
        match self {
            NodeId::Address(a) => Some(*a),
            NodeId::Protocol(_) => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Protocol(p) => f.write_str(p),
            NodeId::Address(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeMeta {
    pub protocol: Option<String>,
    pub category: Option<Category>,
}

/// Directed graph with positive integer edge weights. Node indices are dense.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightedDiGraph {
    nodes: Vec<NodeId>,
    meta: Vec<NodeMeta>,
    index: HashMap<NodeId, usize>,
    edges: HashMap<(usize, usize), u64>,
}

impl WeightedDiGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, meta: NodeMeta) -> usize {
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.nodes.len();
        self.index.insert(id.clone(), i);
        self.nodes.push(id);
        self.meta.push(meta);
        i
    }

    /// Adds `weight` to the edge, creating it if absent. Zero weights are ignored.
    pub fn add_edge(&mut self, src: usize, dst: usize, weight: u64) {
        if weight > 0 {
            *self.edges.entry((src, dst)).or_default() += weight;
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, i: usize) -> &NodeId {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn meta(&self, i: usize) -> &NodeMeta {
        &self.meta[i]
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<u64> {
        self.edges.get(&(src, dst)).copied()
    }

    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    pub fn self_loop_count(&self) -> usize {
        self.edges.keys().filter(|(s, d)| s == d).count()
    }

    /// Edges ordered by (src, dst) index.
    pub fn edges(&self) -> Vec<(usize, usize, u64)> {
        let mut v: Vec<(usize, usize, u64)> = self.edges.iter().map(|(&(s, d), &w)| (s, d, w)).collect();
        v.sort_unstable();
        v
    }

    /// Out-neighbour lists over distinct edges, sorted.
    pub fn out_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(s, d) in self.edges.keys() {
            adj[s].push(d);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// `src,dst,weight` rows with a header, sorted by node name.
    pub fn write_edges<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src", "dst", "weight"])?;
        let mut rows: Vec<(&NodeId, &NodeId, u64)> = self
            .edges
            .iter()
            .map(|(&(s, d), &wt)| (&self.nodes[s], &self.nodes[d], wt))
            .collect();
        rows.sort_unstable();
        for (s, d, wt) in rows {
            w.write_record([s.to_string(), d.to_string(), wt.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<edge dump>", e))?;
        Ok(())
    }

    /// `node,protocol,category` sidecar, sorted by node name.
    pub fn write_nodes<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "protocol", "category"])?;
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_unstable_by(|&a, &b| self.nodes[a].cmp(&self.nodes[b]));
        for i in order {
            let m = &self.meta[i];
            w.write_record([
                self.nodes[i].to_string(),
                m.protocol.clone().unwrap_or_default(),
                m.category.map(|c| c.as_str().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<node dump>", e))?;
        Ok(())
    }

    pub fn read<R1: Read, R2: Read>(nodes: R1, edges: R2) -> Result<Self> {
        let mut g = WeightedDiGraph::new();
        for row in csv::Reader::from_reader(nodes).records() {
            let row = row?;
            let protocol = Some(row[1].to_string()).filter(|s| !s.is_empty());
            let category = match &row[2] {
                "" => None,
                c => Some(c.parse()?),
            };
            g.add_node(NodeId::parse(&row[0]), NodeMeta { protocol, category });
        }
        for row in csv::Reader::from_reader(edges).records() {
            let row = row?;
            let s = g.add_node(NodeId::parse(&row[0]), NodeMeta::default());
            let d = g.add_node(NodeId::parse(&row[1]), NodeMeta::default());
            let w: u64 = row[2]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad weight {:?}", &row[2])))?;
            g.add_edge(s, d, w);
        }
        Ok(g)
    }
}

fn meta_for(addr: &Address, ext: &ExtendedSeedSet) -> NodeMeta {
    match ext.get(addr) {
        Some(e) => NodeMeta {
            protocol: Some(e.protocol.clone()),
            category: Some(e.category),
        },
        None => NodeMeta::default(),
    }
}

fn ca_pairs(tree: &TraceTree, registry: &ContractRegistry) -> HashMap<(Address, Address), u64> {
    let mut m = HashMap::new();
    for e in &tree.edges {
        if e.parent == 0 {
            continue;
        }
        let (Some(s), Some(d)) = (tree.vertices[e.parent].address, tree.vertices[e.child].address) else {
            continue;
        };
        if registry.is_contract(&s) && registry.is_contract(&d) {
            *m.entry((s, d)).or_default() += 1;
        }
    }
    m
}

/// Aggregate every contract-to-contract trace edge into a weighted graph.
///
/// The external call (rooted at the EOA) never contributes. Failed subtrees
/// are skipped unless `include_failed` is set. Nodes are laid out in
/// address order so the result does not depend on shard order.
pub fn build_ca_network(
    trees: &[TraceTree],
    registry: &ContractRegistry,
    ext: &ExtendedSeedSet,
    include_failed: bool,
) -> WeightedDiGraph {
    let merged = trees
        .par_iter()
        .map(|t| {
            if include_failed {
                ca_pairs(t, registry)
            } else {
                ca_pairs(&t.without_failed(), registry)
            }
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });

    let mut addrs: Vec<Address> = merged.keys().flat_map(|&(s, d)| [s, d]).collect();
    addrs.sort_unstable();
    addrs.dedup();
    let mut g = WeightedDiGraph::new();
    for a in &addrs {
        g.add_node(NodeId::Address(*a), meta_for(a, ext));
    }
    for ((s, d), w) in merged {
        let si = g.index[&NodeId::Address(s)];
        let di = g.index[&NodeId::Address(d)];
        g.add_edge(si, di, w);
    }
    g
}

/// Collapse labeled contract nodes into one node per protocol, summing the
/// parallel edges this creates.
pub fn build_protocol_network(ca: &WeightedDiGraph, ext: &ExtendedSeedSet) -> WeightedDiGraph {
    let categories = ext.category_of_protocol();
    let mapped: Vec<(NodeId, NodeMeta)> = ca
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let protocol = n
                .address()
                .and_then(|a| ext.protocol_of(&a))
                .map(str::to_string)
                .or_else(|| match n {
                    NodeId::Protocol(p) => Some(p.clone()),
                    NodeId::Address(_) => None,
                });
            match protocol {
                Some(p) => {
                    let category = categories.get(&p).copied().or(ca.meta[i].category);
                    (
                        NodeId::Protocol(p.clone()),
                        NodeMeta {
                            protocol: Some(p),
                            category,
                        },
                    )
                }
                None => (n.clone(), ca.meta[i].clone()),
            }
        })
        .collect();

    let mut order: Vec<&(NodeId, NodeMeta)> = mapped.iter().collect();
    order.sort_by(|a, b| a.0.cmp(&b.0));
    let mut g = WeightedDiGraph::new();
    for (id, meta) in order {
        g.add_node(id.clone(), meta.clone());
    }
    for (&(s, d), &w) in &ca.edges {
        let si = g.index[&mapped[s].0];
        let di = g.index[&mapped[d].0];
        g.add_edge(si, di, w);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GraphSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub self_loop_count: usize,
    pub average_degree: f64,
    pub density: f64,
}

/// Node/edge counts, `edges / nodes` and `edges / (n (n - 1))` over distinct
/// directed edges, self-loops included.
pub fn graph_summary(g: &WeightedDiGraph, diags: &mut Diagnostics) -> GraphSummary {
    let n = g.node_count();
    let m = g.edge_count();
    let average_degree = if n == 0 { 0.0 } else { m as f64 / n as f64 };
    let density = if n < 2 {
        if n > 0 {
            diags.push(format!("density undefined for {n} node(s); reported as 0"));
        }
        0.0
    } else {
        m as f64 / (n as f64 * (n as f64 - 1.0))
    };
    GraphSummary {
        node_count: n,
        edge_count: m,
        self_loop_count: g.self_loop_count(),
        average_degree,
        density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::{Origin, SeedEntry};
    use crate::ingest::{assemble_trace_trees, Status, TraceRecord, TraceType};
    use crate::types::TxHash;

    fn a(n: u64) -> Address {
        Address::from_low_u64(n)
    }

    fn rec(tx: u8, from: u64, to: u64, path: &[u32]) -> TraceRecord {
        TraceRecord {
            tx_hash: TxHash([tx; 32]),
            block_number: 1,
            from_address: a(from),
            to_address: Some(a(to)),
            trace_address: path.to_vec(),
            trace_type: TraceType::Call,
            method_id: None,
            value: 0,
            status: Status::Success,
        }
    }

    fn registry(contracts: &[u64]) -> ContractRegistry {
        let mut r = ContractRegistry::new();
        for &c in contracts {
            r.insert_contract(a(c));
        }
        r
    }

    fn label(n: u64, p: &str) -> SeedEntry {
        SeedEntry {
            address: a(n),
            protocol: p.into(),
            category: Category::Dex,
            label: p.into(),
            origin: Origin::Seed,
        }
    }

    #[test]
    fn external_only_tree_gives_empty_graph() {
        let trees = assemble_trace_trees(vec![rec(1, 100, 1, &[])], &mut Diagnostics::new());
        let g = build_ca_network(&trees, &registry(&[1]), &ExtendedSeedSet::default(), false);
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn weights_aggregate_across_trees() {
        let trees = assemble_trace_trees(
            vec![
                rec(1, 100, 1, &[]),
                rec(1, 1, 2, &[0]),
                rec(2, 100, 1, &[]),
                rec(2, 1, 2, &[0]),
                rec(2, 2, 1, &[0, 0]),
            ],
            &mut Diagnostics::new(),
        );
        let g = build_ca_network(&trees, &registry(&[1, 2]), &ExtendedSeedSet::default(), false);
        let i1 = g.index_of(&NodeId::Address(a(1))).unwrap();
        let i2 = g.index_of(&NodeId::Address(a(2))).unwrap();
        assert_eq!(g.weight(i1, i2), Some(2));
        assert_eq!(g.weight(i2, i1), Some(1));
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn eoa_endpoints_are_excluded() {
        let trees = assemble_trace_trees(
            vec![rec(1, 100, 1, &[]), rec(1, 1, 50, &[0]), rec(1, 1, 2, &[1])],
            &mut Diagnostics::new(),
        );
        let g = build_ca_network(&trees, &registry(&[1, 2]), &ExtendedSeedSet::default(), false);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.total_weight(), 1);
    }

    #[test]
    fn failed_edges_excluded_by_default() {
        let mut bad = rec(1, 1, 2, &[0]);
        bad.status = Status::Failed;
        let trees = assemble_trace_trees(vec![rec(1, 100, 1, &[]), bad], &mut Diagnostics::new());
        let reg = registry(&[1, 2]);
        let ext = ExtendedSeedSet::default();
        assert_eq!(build_ca_network(&trees, &reg, &ext, false).total_weight(), 0);
        assert_eq!(build_ca_network(&trees, &reg, &ext, true).total_weight(), 1);
    }

    fn graph(edges: &[(u64, u64, u64)]) -> WeightedDiGraph {
        let mut g = WeightedDiGraph::new();
        for &(s, d, w) in edges {
            let si = g.add_node(NodeId::Address(a(s)), NodeMeta::default());
            let di = g.add_node(NodeId::Address(a(d)), NodeMeta::default());
            g.add_edge(si, di, w);
        }
        g
    }

    #[test]
    fn merge_to_self_loop() {
        let ext = ExtendedSeedSet::from_entries([label(1, "uniswap"), label(2, "uniswap")]);
        let p = build_protocol_network(&graph(&[(1, 2, 3)]), &ext);
        let u = p.index_of(&NodeId::Protocol("uniswap".into())).unwrap();
        assert_eq!(p.node_count(), 1);
        assert_eq!(p.weight(u, u), Some(3));
        assert_eq!(p.self_loop_count(), 1);
    }

    #[test]
    fn merge_sums_parallel_edges() {
        let ext = ExtendedSeedSet::from_entries([label(1, "uniswap"), label(2, "uniswap")]);
        let p = build_protocol_network(&graph(&[(1, 9, 2), (2, 9, 1)]), &ext);
        let u = p.index_of(&NodeId::Protocol("uniswap".into())).unwrap();
        let x = p.index_of(&NodeId::Address(a(9))).unwrap();
        assert_eq!(p.weight(u, x), Some(3));
        assert_eq!(p.edge_count(), 1);
        assert_eq!(p.total_weight(), 3);
    }

    #[test]
    fn summary_of_empty_graph() {
        let s = graph_summary(&WeightedDiGraph::new(), &mut Diagnostics::new());
        assert_eq!(s, GraphSummary::default());
    }

    #[test]
    fn summary_arithmetic() {
        let s = graph_summary(&graph(&[(1, 2, 5), (2, 3, 1), (3, 3, 1)]), &mut Diagnostics::new());
        assert_eq!((s.node_count, s.edge_count, s.self_loop_count), (3, 3, 1));
        assert_eq!(s.average_degree, 1.0);
        assert_eq!(s.density, 0.5);
    }

    #[test]
    fn single_node_density_is_zero_with_diagnostic() {
        let mut d = Diagnostics::new();
        let s = graph_summary(&graph(&[(1, 1, 1)]), &mut d);
        assert_eq!(s.density, 0.0);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn dump_roundtrip() {
        let ext = ExtendedSeedSet::from_entries([label(1, "uniswap")]);
        let mut g = graph(&[(1, 2, 5), (2, 3, 1)]);
        g.meta[0] = meta_for(&a(1), &ext);
        let p = build_protocol_network(&g, &ext);
        let (mut n, mut e) = (Vec::new(), Vec::new());
        p.write_nodes(&mut n).unwrap();
        p.write_edges(&mut e).unwrap();
        let back = WeightedDiGraph::read(&n[..], &e[..]).unwrap();
        let (mut n2, mut e2) = (Vec::new(), Vec::new());
        back.write_nodes(&mut n2).unwrap();
        back.write_edges(&mut e2).unwrap();
        assert_eq!((n, e), (n2, e2));
    }
}
