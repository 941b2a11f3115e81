//! Weak and strong connected components.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_truth::ExtendedSeedSet;
use crate::network::{NodeId, WeightedDiGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentMode {
    Weak,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentReport {
    pub mode: ComponentMode,
    /// Node indices per component, largest first; members ascending.
    pub components: Vec<Vec<usize>>,
    /// Node index -> position in `components`.
    pub membership: Vec<usize>,
}

impl ComponentReport {
    fn from_labels(mode: ComponentMode, labels: Vec<usize>, g: &WeightedDiGraph) -> Self {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(v);
        }
        let mut components: Vec<Vec<usize>> = groups.into_values().collect();
        for c in &mut components {
            c.sort_unstable();
        }
        let min_id = |c: &Vec<usize>| c.iter().map(|&v| g.node(v)).min().cloned();
        let mut keyed: Vec<(Option<NodeId>, Vec<usize>)> = components.into_iter().map(|c| (min_id(&c), c)).collect();
        keyed.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
        let components: Vec<Vec<usize>> = keyed.into_iter().map(|(_, c)| c).collect();
        let mut membership = vec![0; labels.len()];
        for (i, c) in components.iter().enumerate() {
            for &v in c {
                membership[v] = i;
            }
        }
        ComponentReport {
            mode,
            components,
            membership,
        }
    }

    /// Edges with both endpoints inside each component.
    pub fn internal_edge_counts(&self, g: &WeightedDiGraph) -> Vec<usize> {
        let mut out = vec![0; self.components.len()];
        for (s, d, _) in g.edges() {
            if self.membership[s] == self.membership[d] {
                out[self.membership[s]] += 1;
            }
        }
        out
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn weak_labels(n: usize, edges: &[(usize, usize, u64)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    for &(s, d, _) in edges {
        let (a, b) = (find(&mut parent, s), find(&mut parent, d));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|v| find(&mut parent, v)).collect()
}

/// Iterative Tarjan; returns a component label per node.
fn strong_labels(adj: &[Vec<usize>]) -> Vec<usize> {
    const UNVISITED: usize = usize::MAX;
    let n = adj.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut label = vec![UNVISITED; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_label = 0;
    // (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    label[w] = next_label;
                    if w == v {
                        break;
                    }
                }
                next_label += 1;
            }
        }
    }
    label
}

/// Exact components, ordered by size descending then smallest member id.
pub fn connected_components(g: &WeightedDiGraph, mode: ComponentMode) -> ComponentReport {
    let labels = match mode {
        ComponentMode::Weak => weak_labels(g.node_count(), &g.edges()),
        ComponentMode::Strong => strong_labels(&g.out_adjacency()),
    };
    ComponentReport::from_labels(mode, labels, g)
}

/// Labeled-node counts per (protocol, component) over the `top_k` largest components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMatrix {
    pub protocols: Vec<String>,
    pub component_sizes: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
}

impl ComponentMatrix {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["protocol".to_string()];
        header.extend((0..self.component_sizes.len()).map(|i| format!("component_{}", i + 1)));
        w.write_record(&header)?;
        let mut sizes = vec!["(size)".to_string()];
        sizes.extend(self.component_sizes.iter().map(usize::to_string));
        w.write_record(&sizes)?;
        for (p, row) in self.protocols.iter().zip(&self.counts) {
            let mut r = vec![p.clone()];
            r.extend(row.iter().map(usize::to_string));
            w.write_record(&r)?;
        }
        w.flush().map_err(|e| Error::io("<component matrix>", e))?;
        Ok(())
    }
}

pub fn component_protocol_matrix(
    report: &ComponentReport,
    g: &WeightedDiGraph,
    ext: &ExtendedSeedSet,
    top_k: usize,
) -> ComponentMatrix {
    let k = top_k.min(report.components.len());
    let mut rows: BTreeMap<String, Vec<usize>> = ext.protocols().into_iter().map(|p| (p, vec![0; k])).collect();
    for (ci, comp) in report.components.iter().take(k).enumerate() {
        for &v in comp {
            let protocol = match g.node(v) {
                NodeId::Address(a) => ext.protocol_of(a).map(str::to_string),
                NodeId::Protocol(p) => Some(p.clone()),
            };
            if let Some(p) = protocol {
                rows.entry(p).or_insert_with(|| vec![0; k])[ci] += 1;
            }
        }
    }
    ComponentMatrix {
        protocols: rows.keys().cloned().collect(),
        component_sizes: report.components.iter().take(k).map(Vec::len).collect(),
        counts: rows.into_values().collect(),
    }
}
