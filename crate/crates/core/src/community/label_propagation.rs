//! Asynchronous label propagation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CommunityGraph;

const MAX_SWEEPS: usize = 1000;

/// Labels carried by the most neighbours of `v`, ascending.
fn dominant(g: &CommunityGraph, labels: &[usize], v: usize, counts: &mut Vec<(usize, usize)>) -> Vec<usize> {
    counts.clear();
    counts.extend(g.neighbors(v).iter().map(|&u| (labels[u], 0)));
    counts.sort_unstable();
    counts.dedup_by(|a, b| {
        if a.0 == b.0 {
            b.1 += 1;
            true
        } else {
            false
        }
    });
    let top = counts.iter().map(|c| c.1).max().unwrap_or(0);
    counts.iter().filter(|c| c.1 == top).map(|c| c.0).collect()
}

/// A node keeps its label when it is among the dominant ones; otherwise it
/// takes one of them uniformly at random. Stops once every node holds a
/// dominant label.
pub fn label_propagation(g: &CommunityGraph, seed: u64) -> Vec<usize> {
    let n = g.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).filter(|&v| g.degree(v) > 0).collect();
    let mut counts = Vec::new();
    for sweep in 0..MAX_SWEEPS {
        order.shuffle(&mut rng);
        for &v in &order {
            let best = dominant(g, &labels, v, &mut counts);
            if !best.contains(&labels[v]) {
                labels[v] = *best.choose(&mut rng).expect("node has neighbours");
            }
        }
        let stable = order
            .iter()
            .all(|&v| dominant(g, &labels, v, &mut counts).contains(&labels[v]));
        if stable {
            return labels;
        }
        if sweep + 1 == MAX_SWEEPS {
            log::warn!("label propagation stopped after {MAX_SWEEPS} sweeps without converging");
        }
    }
    labels
}
