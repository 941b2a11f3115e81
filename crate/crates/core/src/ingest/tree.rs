use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{format_trace_address, Status, TraceRecord, TraceType};
use crate::error::Diagnostics;
use crate::types::{Address, BlockHash, MethodId, TxHash};

/// What a vertex is called. Generalization replaces concrete addresses with
/// `Deployed`/`Asset`; extraction replaces consumed subtrees with `Block`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Address(Address),
    /// Target of a creation whose address was never assigned.
    Unassigned,
    /// Contract deployed by a protocol's contracts, renamed `$<protocol>-DEPLOYED`.
    Deployed(String),
    Asset,
    Block(BlockHash),
}

impl Label {
    /// Canonical text used in block hashing and dumps.
    pub fn canonical(&self) -> String {
        match self {
            Label::Address(a) => a.to_hex(),
            Label::Unassigned => "unassigned".to_string(),
            Label::Deployed(p) => format!("${p}-DEPLOYED"),
            Label::Asset => "ASSET".to_string(),
            Label::Block(h) => h.to_hex(),
        }
    }

    pub fn parse_canonical(s: &str) -> Option<Label> {
        if s == "ASSET" {
            return Some(Label::Asset);
        }
        if s == "unassigned" {
            return Some(Label::Unassigned);
        }
        if let Some(p) = s.strip_prefix('$').and_then(|r| r.strip_suffix("-DEPLOYED")) {
            return Some(Label::Deployed(p.to_string()));
        }
        if s.starts_with("0x") {
            return s.parse().ok().map(Label::Address);
        }
        s.parse().ok().map(Label::Block)
    }

    pub fn address(&self) -> Option<Address> {
        match self {
            Label::Address(a) => Some(*a),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Label::parse_canonical(&s).ok_or_else(|| D::Error::custom(format!("bad vertex label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Account,
    BlockHashLeaf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub label: Label,
    /// Concrete account behind the label, kept through generalization.
    pub address: Option<Address>,
}

impl Vertex {
    pub fn account(address: Address) -> Self {
        Vertex {
            label: Label::Address(address),
            address: Some(address),
        }
    }

    pub fn kind(&self) -> VertexKind {
        match self.label {
            Label::Block(_) => VertexKind::BlockHashLeaf,
            _ => VertexKind::Account,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEdge {
    pub parent: usize,
    pub child: usize,
    /// Rank of the edge in lexicographic trace_address order.
    pub t: u32,
    pub method: Option<MethodId>,
    pub trace_type: TraceType,
    /// This call itself failed.
    pub failed: bool,
    /// This call or one of its ancestors failed.
    pub in_failed_subtree: bool,
}

/// Execution tree of one external transaction.
///
/// Vertex 0 is the external caller; vertex `i + 1` is the target of
/// `edges[i]`, and `edges[i].t == i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceTree {
    pub tx_hash: TxHash,
    pub block_number: u64,
    pub vertices: Vec<Vertex>,
    pub edges: Vec<TraceEdge>,
}

impl TraceTree {
    pub fn root_caller(&self) -> &Vertex {
        &self.vertices[0]
    }

    /// The account targeted by the external transaction.
    pub fn root_target(&self) -> Option<&Vertex> {
        self.edges.first().map(|e| &self.vertices[e.child])
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Outgoing edge indices per vertex, in `t` order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.parent].push(i);
        }
        out
    }

    pub fn has_failed(&self) -> bool {
        self.edges.iter().any(|e| e.in_failed_subtree)
    }

    /// Copy of the tree with every failed subtree removed and `t` re-ranked.
    pub fn without_failed(&self) -> TraceTree {
        if !self.has_failed() {
            return self.clone();
        }
        let mut remap = vec![usize::MAX; self.vertices.len()];
        remap[0] = 0;
        let mut vertices = vec![self.vertices[0].clone()];
        let mut edges = Vec::new();
        for e in &self.edges {
            if e.in_failed_subtree {
                continue;
            }
            let child = vertices.len();
            remap[e.child] = child;
            vertices.push(self.vertices[e.child].clone());
            edges.push(TraceEdge {
                parent: remap[e.parent],
                child,
                t: edges.len() as u32,
                ..e.clone()
            });
        }
        TraceTree {
            tx_hash: self.tx_hash,
            block_number: self.block_number,
            vertices,
            edges,
        }
    }
}

/// Group records by transaction, preserving first-appearance order.
pub fn group_by_tx(records: Vec<TraceRecord>) -> Vec<Vec<TraceRecord>> {
    let mut index: HashMap<TxHash, usize> = HashMap::new();
    let mut groups: Vec<Vec<TraceRecord>> = Vec::new();
    for r in records {
        let i = *index.entry(r.tx_hash).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[i].push(r);
    }
    groups
}

fn assemble_one(mut group: Vec<TraceRecord>) -> Result<TraceTree, String> {
    let tx = group[0].tx_hash;
    group.sort_by(|a, b| a.trace_address.cmp(&b.trace_address));
    let externals = group.iter().take_while(|r| r.is_external()).count();
    if externals == 0 {
        return Err(format!("{tx}: no external transaction row"));
    }
    if externals > 1 {
        return Err(format!("{tx}: {externals} external transaction rows"));
    }

    let root = &group[0];
    let mut vertices = Vec::with_capacity(group.len() + 1);
    vertices.push(Vertex::account(root.from_address));
    let mut edges: Vec<TraceEdge> = Vec::with_capacity(group.len());
    let mut by_path: HashMap<&[u32], usize> = HashMap::with_capacity(group.len());

    for (i, r) in group.iter().enumerate() {
        let parent_edge = if r.trace_address.is_empty() {
            None
        } else {
            let parent_path = &r.trace_address[..r.trace_address.len() - 1];
            match by_path.get(parent_path) {
                Some(&p) => Some(p),
                None => {
                    return Err(format!(
                        "{tx}: orphan trace [{}] (missing parent [{}])",
                        format_trace_address(&r.trace_address),
                        format_trace_address(parent_path)
                    ))
                }
            }
        };
        if by_path.insert(&r.trace_address, i).is_some() {
            return Err(format!(
                "{tx}: duplicate trace [{}]",
                format_trace_address(&r.trace_address)
            ));
        }
        let vertex = match r.to_address {
            Some(a) => Vertex::account(a),
            None => Vertex {
                label: Label::Unassigned,
                address: None,
            },
        };
        vertices.push(vertex);
        let failed = r.status == Status::Failed;
        let (parent, inherited) = match parent_edge {
            None => (0, false),
            Some(p) => (edges[p].child, edges[p].in_failed_subtree),
        };
        let method = if r.trace_type == TraceType::Selfdestruct {
            None
        } else {
            r.method_id
        };
        edges.push(TraceEdge {
            parent,
            child: i + 1,
            t: i as u32,
            method,
            trace_type: r.trace_type,
            failed,
            in_failed_subtree: failed || inherited,
        });
    }

    Ok(TraceTree {
        tx_hash: tx,
        block_number: root.block_number,
        vertices,
        edges,
    })
}

/// Build one tree per transaction. Transactions violating the trace
/// invariants are rejected with a diagnostic. Output order follows the first
/// appearance of each tx_hash in `records`, independent of thread count.
pub fn assemble_trace_trees(records: Vec<TraceRecord>, diags: &mut Diagnostics) -> Vec<TraceTree> {
    let groups = group_by_tx(records);
    let results: Vec<Result<TraceTree, String>> = groups.into_par_iter().map(assemble_one).collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(t) => out.push(t),
            Err(msg) => diags.push(format!("rejected transaction {msg}")),
        }
    }
    out
}
