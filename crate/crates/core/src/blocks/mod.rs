//! Generalized trace trees and nested protocol building blocks.

mod store;

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ground_truth::{ExtendedSeedSet, Origin};
use crate::ingest::{ContractRegistry, Label, TraceEdge, TraceTree, Vertex, ERC20_SELECTORS};
use crate::types::{BlockHash, MethodId};

pub use store::{flatten_block, BlockStore, StoredBlock, TxBlocks};

/// Minimum inclusive depth, in edges, of a protocol subtree that forms a block.
pub const MIN_BLOCK_DEPTH: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildingBlock {
    pub hash: BlockHash,
    pub root_protocol: String,
    pub root_method_id: Option<MethodId>,
    /// One entry per subtree edge in ascending `t`: the edge's target label.
    pub vertex_labels: Vec<Label>,
    pub outdegrees: Vec<u32>,
    pub method_ids: Vec<Option<MethodId>>,
    /// `(parent, child)` positions into the lists above.
    pub edges: Vec<(u32, u32)>,
    pub child_hashes: Vec<BlockHash>,
}

/// `label:outdegree:method` entries joined by `|`.
pub fn canonical_string(labels: &[Label], outdegrees: &[u32], methods: &[Option<MethodId>]) -> Result<String> {
    if labels.len() != outdegrees.len() || labels.len() != methods.len() {
        return Err(Error::LengthMismatch {
            labels: labels.len(),
            outdegrees: outdegrees.len(),
            methods: methods.len(),
        });
    }
    let parts: Vec<String> = labels
        .iter()
        .zip(outdegrees)
        .zip(methods)
        .map(|((l, d), m)| {
            let m = m.map_or_else(|| "none".to_string(), |m| m.to_hex());
            format!("{}:{d}:{m}", l.canonical())
        })
        .collect();
    Ok(parts.join("|"))
}

pub fn block_hash(labels: &[Label], outdegrees: &[u32], methods: &[Option<MethodId>]) -> Result<BlockHash> {
    let s = canonical_string(labels, outdegrees, methods)?;
    Ok(BlockHash(Sha256::digest(s.as_bytes()).into()))
}

impl BuildingBlock {
    pub fn recompute_hash(&self) -> Result<BlockHash> {
        block_hash(&self.vertex_labels, &self.outdegrees, &self.method_ids)
    }
}

/// Protocol a vertex belongs to, by generalized label or underlying address.
pub fn vertex_protocol<'a>(v: &'a Vertex, ext: &'a ExtendedSeedSet) -> Option<&'a str> {
    match &v.label {
        Label::Deployed(p) => Some(p),
        Label::Block(_) => None,
        _ => v.address.and_then(|a| ext.protocol_of(&a)),
    }
}

/// Renames extended protocol contracts to `$p-DEPLOYED` and ERC20 tokens
/// called with a standard ERC20 method in this tree to `ASSET`.
pub fn generalize(tree: &TraceTree, ext: &ExtendedSeedSet, registry: &ContractRegistry) -> TraceTree {
    let selectors: HashSet<MethodId> = ERC20_SELECTORS.iter().copied().collect();
    let assets: HashSet<_> = tree
        .edges
        .iter()
        .filter(|e| e.method.is_some_and(|m| selectors.contains(&m)))
        .filter_map(|e| tree.vertices[e.child].address)
        .filter(|a| registry.is_erc20(a))
        .collect();
    let mut out = tree.clone();
    for v in &mut out.vertices {
        let Some(a) = v.address else { continue };
        match ext.get(&a) {
            Some(entry) if entry.origin == Origin::Extended => {
                v.label = Label::Deployed(entry.protocol.clone());
            }
            _ if assets.contains(&a) => v.label = Label::Asset,
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    /// Blocks in processing order: ascending depth, then ascending `t`.
    pub blocks: Vec<BuildingBlock>,
    /// The tree left after every replacement, with `t` re-ranked.
    pub residual: TraceTree,
}

/// Inclusive depth in edges of the subtree hanging from each edge.
pub fn edge_depths(tree: &TraceTree) -> Vec<u32> {
    let mut below = vec![0u32; tree.vertex_count()];
    let mut depth = vec![0u32; tree.edge_count()];
    // children always follow their parent edge in t order
    for (i, e) in tree.edges.iter().enumerate().rev() {
        depth[i] = 1 + below[e.child];
        below[e.parent] = below[e.parent].max(depth[i]);
    }
    depth
}

/// Runs the nested extraction on a generalized tree.
pub fn extract_building_blocks(tree: &TraceTree, ext: &ExtendedSeedSet) -> Extraction {
    let depth = edge_depths(tree);
    let mut candidates: Vec<(u32, u32, usize, String)> = tree
        .edges
        .iter()
        .enumerate()
        .filter(|(i, _)| depth[*i] >= MIN_BLOCK_DEPTH)
        .filter_map(|(i, e)| vertex_protocol(&tree.vertices[e.child], ext).map(|p| (depth[i], e.t, i, p.to_string())))
        .collect();
    candidates.sort_by_key(|c| (c.0, c.1));

    let mut labels: Vec<Label> = tree.vertices.iter().map(|v| v.label.clone()).collect();
    let mut children = tree.children();
    let mut alive = vec![true; tree.vertex_count()];
    let mut blocks = Vec::with_capacity(candidates.len());

    for (_, _, root_edge, protocol) in candidates {
        let root = tree.edges[root_edge].child;
        // preorder over t-sorted children yields ascending t
        let mut order: Vec<usize> = Vec::new();
        let mut position = std::collections::HashMap::new();
        let mut stack = vec![root_edge];
        while let Some(ei) = stack.pop() {
            position.insert(tree.edges[ei].child, order.len() as u32);
            order.push(ei);
            stack.extend(children[tree.edges[ei].child].iter().rev());
        }
        let vertex_labels: Vec<Label> = order.iter().map(|&ei| labels[tree.edges[ei].child].clone()).collect();
        let outdegrees: Vec<u32> = order
            .iter()
            .map(|&ei| children[tree.edges[ei].child].len() as u32)
            .collect();
        let method_ids: Vec<Option<MethodId>> = order.iter().map(|&ei| tree.edges[ei].method).collect();
        let edges = order[1..]
            .iter()
            .map(|&ei| {
                let e = &tree.edges[ei];
                (position[&e.parent], position[&e.child])
            })
            .collect();
        let child_hashes = vertex_labels
            .iter()
            .filter_map(|l| match l {
                Label::Block(h) => Some(*h),
                _ => None,
            })
            .collect();
        let hash = block_hash(&vertex_labels, &outdegrees, &method_ids).expect("lists built together");

        for &ei in &order[1..] {
            alive[tree.edges[ei].child] = false;
        }
        labels[root] = Label::Block(hash);
        children[root].clear();

        blocks.push(BuildingBlock {
            hash,
            root_protocol: protocol,
            root_method_id: tree.edges[root_edge].method,
            vertex_labels,
            outdegrees,
            method_ids,
            edges,
            child_hashes,
        });
    }

    Extraction {
        blocks,
        residual: residual_tree(tree, &labels, &alive),
    }
}

fn residual_tree(tree: &TraceTree, labels: &[Label], alive: &[bool]) -> TraceTree {
    let mut remap = vec![usize::MAX; tree.vertex_count()];
    remap[0] = 0;
    let mut vertices = vec![Vertex {
        label: labels[0].clone(),
        address: tree.vertices[0].address,
    }];
    let mut edges = Vec::new();
    for e in &tree.edges {
        if !alive[e.child] {
            continue;
        }
        let child = vertices.len();
        remap[e.child] = child;
        let address = match labels[e.child] {
            Label::Block(_) => None,
            _ => tree.vertices[e.child].address,
        };
        vertices.push(Vertex {
            label: labels[e.child].clone(),
            address,
        });
        edges.push(TraceEdge {
            parent: remap[e.parent],
            child,
            t: edges.len() as u32,
            ..e.clone()
        });
    }
    TraceTree {
        tx_hash: tree.tx_hash,
        block_number: tree.block_number,
        vertices,
        edges,
    }
}

/// Failed-subtree pruning, generalization and extraction for one tree.
pub fn extract_from_trace(
    tree: &TraceTree,
    ext: &ExtendedSeedSet,
    registry: &ContractRegistry,
    include_failed: bool,
) -> Extraction {
    let pruned;
    let tree = if include_failed {
        tree
    } else {
        pruned = tree.without_failed();
        &pruned
    };
    extract_building_blocks(&generalize(tree, ext, registry), ext)
}

/// Per-transaction extraction over many trees, in input order.
pub fn extract_all(
    trees: &[TraceTree],
    ext: &ExtendedSeedSet,
    registry: &ContractRegistry,
    include_failed: bool,
) -> Vec<(TxBlocks, Vec<BuildingBlock>)> {
    trees
        .par_iter()
        .map(|tree| {
            let x = extract_from_trace(tree, ext, registry, include_failed);
            let root_protocol = tree
                .root_target()
                .and_then(|v| vertex_protocol(v, ext))
                .map(str::to_string);
            let outermost = x
                .residual
                .vertices
                .iter()
                .filter_map(|v| match v.label {
                    Label::Block(h) => Some(h),
                    _ => None,
                })
                .collect();
            let tx = TxBlocks {
                tx_hash: tree.tx_hash,
                block_number: tree.block_number,
                root_protocol,
                blocks: x.blocks.iter().map(|b| b.hash).collect(),
                outermost,
            };
            (tx, x.blocks)
        })
        .collect()
}
