//! Louvain and Leiden modularity optimization.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{renumber, CommunityGraph};

const EPS: f64 = 1e-12;
const LEIDEN_THETA: f64 = 0.01;
const MAX_LEVELS: usize = 64;

/// Weighted undirected multilevel graph. `loops[v]` holds the weight of
/// edges inside an aggregated node counted in both directions, so the
/// degree of `v` is `loops[v]` plus its incident weights.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
    degree: Vec<f64>,
    m2: f64,
}

impl Level {
    fn from_graph(g: &CommunityGraph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = (0..g.node_count())
            .map(|v| g.neighbors(v).iter().map(|&u| (u, 1.0)).collect())
            .collect();
        Level::new(adj, vec![0.0; g.node_count()])
    }

    fn new(adj: Vec<Vec<(usize, f64)>>, loops: Vec<f64>) -> Self {
        let degree: Vec<f64> = adj
            .iter()
            .zip(&loops)
            .map(|(a, l)| l + a.iter().map(|(_, w)| w).sum::<f64>())
            .collect();
        let m2 = degree.iter().sum();
        Level { adj, loops, degree, m2 }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn aggregate(&self, comm: &[usize], k: usize) -> Level {
        let mut loops = vec![0.0; k];
        let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for v in 0..self.len() {
            let c = comm[v];
            loops[c] += self.loops[v];
            for &(u, w) in &self.adj[v] {
                let d = comm[u];
                if c == d {
                    loops[c] += w;
                } else {
                    *rows[c].entry(d).or_insert(0.0) += w;
                }
            }
        }
        let adj = rows.into_iter().map(|r| r.into_iter().collect()).collect();
        Level::new(adj, loops)
    }

    /// Weights from `v` to each neighbouring community, in first-seen order.
    fn community_links(&self, v: usize, comm: &[usize], scratch: &mut Scratch) {
        scratch.clear();
        for &(u, w) in &self.adj[v] {
            scratch.add(comm[u], w);
        }
    }
}

struct Scratch {
    links: Vec<f64>,
    present: Vec<bool>,
    seen: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            links: vec![0.0; n],
            present: vec![false; n],
            seen: Vec::new(),
        }
    }

    fn clear(&mut self) {
        for &c in &self.seen {
            self.links[c] = 0.0;
            self.present[c] = false;
        }
        self.seen.clear();
    }

    fn add(&mut self, c: usize, w: f64) {
        if !self.present[c] {
            self.present[c] = true;
            self.seen.push(c);
        }
        self.links[c] += w;
    }
}

/// Best community for `v` after removing it from `own`; ties keep `own`,
/// then the first-seen neighbour community.
fn best_move(level: &Level, v: usize, own: usize, total: &[f64], scratch: &Scratch) -> usize {
    let kv = level.degree[v];
    let gain = |c: usize, links_c: f64| {
        let t = if c == own { total[c] - kv } else { total[c] };
        links_c - kv * t / level.m2
    };
    let mut best = own;
    let mut best_gain = gain(own, scratch.links[own]);
    for &c in &scratch.seen {
        if c == own {
            continue;
        }
        let g = gain(c, scratch.links[c]);
        if g > best_gain + EPS {
            best = c;
            best_gain = g;
        }
    }
    best
}

/// Repeated sweeps in a shuffled order until no node moves.
fn louvain_moves(level: &Level, comm: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
    let n = level.len();
    let mut total = vec![0.0; n];
    for v in 0..n {
        total[comm[v]] += level.degree[v];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut scratch = Scratch::new(n);
    let mut any = false;
    loop {
        let mut moved = false;
        for &v in &order {
            let own = comm[v];
            level.community_links(v, comm, &mut scratch);
            let best = best_move(level, v, own, &total, &scratch);
            if best != own {
                total[own] -= level.degree[v];
                total[best] += level.degree[v];
                comm[v] = best;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        any = true;
    }
    any
}

pub fn louvain(g: &CommunityGraph, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(g);
    let mut membership: Vec<usize> = (0..g.node_count()).collect();
    if level.m2 == 0.0 {
        return membership;
    }
    for _ in 0..MAX_LEVELS {
        let mut comm: Vec<usize> = (0..level.len()).collect();
        if !louvain_moves(&level, &mut comm, &mut rng) {
            break;
        }
        let (comm, k) = renumber(&comm);
        for m in &mut membership {
            *m = comm[*m];
        }
        level = level.aggregate(&comm, k);
    }
    membership
}

/// Queue-based local moving: only neighbours of moved nodes are revisited.
fn fast_moves(level: &Level, comm: &mut [usize], rng: &mut ChaCha8Rng) {
    let n = level.len();
    let mut total = vec![0.0; n];
    for v in 0..n {
        total[comm[v]] += level.degree[v];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queued = vec![true; n];
    let mut queue: VecDeque<usize> = order.into();
    let mut scratch = Scratch::new(n);
    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let own = comm[v];
        level.community_links(v, comm, &mut scratch);
        let best = best_move(level, v, own, &total, &scratch);
        if best == own {
            continue;
        }
        total[own] -= level.degree[v];
        total[best] += level.degree[v];
        comm[v] = best;
        for &(u, _) in &level.adj[v] {
            if !queued[u] && comm[u] != best {
                queued[u] = true;
                queue.push_back(u);
            }
        }
    }
}

/// Splits each community of `comm` into well-connected subcommunities by
/// randomized greedy merging of singletons.
fn refine(level: &Level, comm: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = level.len();
    let mut members = vec![Vec::new(); k];
    for v in 0..n {
        members[comm[v]].push(v);
    }
    let mut refined: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut total = level.degree.clone();
    // weight from each refined community to the rest of its parent community
    let mut external: Vec<f64> = (0..n)
        .map(|v| {
            level.adj[v]
                .iter()
                .filter(|&&(u, _)| comm[u] == comm[v])
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let mut scratch = Scratch::new(n);
    let mut candidates: Vec<(usize, f64)> = Vec::new();

    for nodes in &mut members {
        let parent_total: f64 = nodes.iter().map(|&v| level.degree[v]).sum();
        nodes.shuffle(rng);
        for &v in nodes.iter() {
            let own = refined[v];
            if size[own] > 1 {
                continue;
            }
            let kv = level.degree[v];
            if external[v] < kv * (parent_total - kv) / level.m2 {
                continue;
            }
            scratch.clear();
            for &(u, w) in &level.adj[v] {
                if comm[u] == comm[v] {
                    scratch.add(refined[u], w);
                }
            }
            candidates.clear();
            for &c in &scratch.seen {
                if c == own {
                    continue;
                }
                let well_connected = external[c] >= total[c] * (parent_total - total[c]) / level.m2;
                let gain = scratch.links[c] - kv * total[c] / level.m2;
                if well_connected && gain >= 0.0 {
                    candidates.push((c, gain));
                }
            }
            if candidates.is_empty() {
                continue;
            }
            let top = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = candidates
                .iter()
                .map(|&(_, gain)| ((gain - top) / LEIDEN_THETA).exp())
                .collect();
            let mut r = rng.random::<f64>() * weights.iter().sum::<f64>();
            let mut chosen = candidates[candidates.len() - 1].0;
            for (&(c, _), w) in candidates.iter().zip(&weights) {
                if r < *w {
                    chosen = c;
                    break;
                }
                r -= w;
            }
            external[chosen] += external[v] - 2.0 * scratch.links[chosen];
            total[chosen] += kv;
            size[chosen] += 1;
            size[own] = 0;
            refined[v] = chosen;
        }
    }
    refined
}

pub fn leiden(g: &CommunityGraph, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = Level::from_graph(g);
    let mut membership: Vec<usize> = (0..g.node_count()).collect();
    if level.m2 == 0.0 {
        return membership;
    }
    let mut comm: Vec<usize> = (0..level.len()).collect();
    for _ in 0..MAX_LEVELS {
        fast_moves(&level, &mut comm, &mut rng);
        let (c, k) = renumber(&comm);
        comm = c;
        if k == level.len() {
            break;
        }
        let (refined, kr) = renumber(&refine(&level, &comm, k, &mut rng));
        if kr == level.len() {
            break;
        }
        let mut next = vec![0; kr];
        for v in 0..level.len() {
            next[refined[v]] = comm[v];
        }
        for m in &mut membership {
            *m = refined[*m];
        }
        level = level.aggregate(&refined, kr);
        comm = next;
    }
    membership.iter().map(|&m| comm[m]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::modularity as q;
    use crate::community::tests::{planted, two_cliques};

    #[test]
    fn aggregation_preserves_total_weight() {
        let g = planted(3, 20, 0.3, 0.05, 1);
        let level = Level::from_graph(&g);
        let comm: Vec<usize> = (0..g.node_count()).map(|v| v % 7).collect();
        let agg = level.aggregate(&comm, 7);
        assert!((agg.m2 - level.m2).abs() < 1e-9);
        let internal: f64 = agg.loops.iter().sum();
        let expect: f64 = (0..g.node_count())
            .map(|v| g.neighbors(v).iter().filter(|&&u| comm[u] == comm[v]).count() as f64)
            .sum();
        assert!((internal - expect).abs() < 1e-9);
    }

    #[test]
    fn refined_communities_nest_inside_parents() {
        let g = planted(4, 25, 0.25, 0.03, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let level = Level::from_graph(&g);
        let mut comm: Vec<usize> = (0..level.len()).collect();
        fast_moves(&level, &mut comm, &mut rng);
        let (comm, k) = renumber(&comm);
        let refined = refine(&level, &comm, k, &mut rng);
        for v in 0..level.len() {
            for u in 0..level.len() {
                if refined[v] == refined[u] {
                    assert_eq!(comm[v], comm[u]);
                }
            }
        }
    }

    #[test]
    fn leiden_at_least_matches_louvain_on_cliques() {
        let g = two_cliques();
        let a = louvain(&g, 3);
        let b = leiden(&g, 3);
        assert!(q(&g, &b) >= q(&g, &a) - 1e-12);
    }
}
