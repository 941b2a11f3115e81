//! Newman's leading-eigenvector method by repeated bisection.

use nalgebra::{DMatrix, SymmetricEigen};

use super::CommunityGraph;

/// Communities up to this size use a dense symmetric eigensolver.
const DENSE_LIMIT: usize = 2000;
const POWER_MAX_ITER: usize = 20_000;
const TOL: f64 = 1e-10;

/// Generalized modularity matrix of one community, applied implicitly.
struct Split<'a> {
    g: &'a CommunityGraph,
    members: &'a [usize],
    local: Vec<usize>,
    k: Vec<f64>,
    diag: Vec<f64>,
    m2: f64,
}

impl<'a> Split<'a> {
    fn new(g: &'a CommunityGraph, members: &'a [usize], slot: &mut [usize]) -> Self {
        let m2 = (2 * g.edge_count()) as f64;
        for (i, &v) in members.iter().enumerate() {
            slot[v] = i;
        }
        let inside = |v: usize| members.get(slot[v]) == Some(&v);
        let k: Vec<f64> = members.iter().map(|&v| g.degree(v) as f64).collect();
        let k_total: f64 = k.iter().sum();
        let diag = members
            .iter()
            .zip(&k)
            .map(|(&v, &kv)| {
                let within = g.neighbors(v).iter().filter(|&&u| inside(u)).count() as f64;
                within - kv * k_total / m2
            })
            .collect();
        Split {
            g,
            members,
            local: slot.to_vec(),
            k,
            diag,
            m2,
        }
    }

    fn inside(&self, v: usize) -> bool {
        self.members.get(self.local[v]) == Some(&v)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let kx: f64 = self.k.iter().zip(x).map(|(a, b)| a * b).sum();
        for (i, &v) in self.members.iter().enumerate() {
            let ax: f64 = self
                .g
                .neighbors(v)
                .iter()
                .filter(|&&u| self.inside(u))
                .map(|&u| x[self.local[u]])
                .sum();
            out[i] = ax - self.k[i] * kx / self.m2 - self.diag[i] * x[i];
        }
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.members.len();
        let mut b = DMatrix::from_fn(n, n, |i, j| -self.k[i] * self.k[j] / self.m2);
        for (i, &v) in self.members.iter().enumerate() {
            for &u in self.g.neighbors(v) {
                if self.inside(u) {
                    b[(i, self.local[u])] += 1.0;
                }
            }
            b[(i, i)] -= self.diag[i];
        }
        b
    }

    /// Leading eigenpair of the community's modularity matrix.
    fn leading(&self) -> (f64, Vec<f64>) {
        let n = self.members.len();
        if n <= DENSE_LIMIT {
            let eig = SymmetricEigen::new(self.dense());
            let (idx, &value) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty community");
            return (value, eig.eigenvectors.column(idx).iter().copied().collect());
        }
        self.power_iteration()
    }

    /// Power iteration on `B + shift I`, where `shift` bounds the spectral
    /// radius so the leading eigenvalue of `B` dominates.
    fn power_iteration(&self) -> (f64, Vec<f64>) {
        let n = self.members.len();
        let max_k = self.k.iter().copied().fold(0.0, f64::max);
        let sum_k2: f64 = self.k.iter().map(|k| k * k).sum();
        let max_d = self.diag.iter().map(|d| d.abs()).fold(0.0, f64::max);
        let shift = max_k + sum_k2 / self.m2 + max_d;
        let mut x: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 / 10.0).collect();
        let mut y = vec![0.0; n];
        let mut value = 0.0;
        for _ in 0..POWER_MAX_ITER {
            self.apply(&x, &mut y);
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi += shift * xi;
            }
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            let next = y.iter().map(|v| v / norm).collect::<Vec<_>>();
            let delta = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            value = norm - shift;
            x = next;
            if delta < TOL {
                break;
            }
        }
        (value, x)
    }
}

/// Each community is bisected by the sign of its leading eigenvector while
/// that increases modularity.
pub fn leading_eigenvector(g: &CommunityGraph) -> Vec<usize> {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return (0..n).collect();
    }
    let mut communities: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut slot = vec![usize::MAX; n];
    let mut i = 0;
    while i < communities.len() {
        if communities[i].len() < 2 {
            i += 1;
            continue;
        }
        let members = std::mem::take(&mut communities[i]);
        let split = Split::new(g, &members, &mut slot);
        let (value, vector) = split.leading();
        let s: Vec<f64> = vector.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut bs = vec![0.0; s.len()];
        split.apply(&s, &mut bs);
        let gain: f64 = s.iter().zip(&bs).map(|(a, b)| a * b).sum();
        let side = |positive: bool| -> Vec<usize> {
            members
                .iter()
                .zip(&s)
                .filter(|(_, &sign)| (sign > 0.0) == positive)
                .map(|(&v, _)| v)
                .collect()
        };
        let (plus, minus) = (side(true), side(false));
        for &v in &members {
            slot[v] = usize::MAX;
        }
        if value <= TOL || gain <= TOL || plus.is_empty() || minus.is_empty() {
            communities[i] = members;
            i += 1;
            continue;
        }
        communities[i] = plus;
        communities.push(minus);
    }
    let mut assignment = vec![0; n];
    for (c, members) in communities.iter().enumerate() {
        for &v in members {
            assignment[v] = c;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::tests::planted;

    #[test]
    fn dense_and_power_agree_on_leading_pair() {
        let g = planted(3, 25, 0.3, 0.03, 8);
        let members: Vec<usize> = (0..g.node_count()).collect();
        let mut slot = vec![usize::MAX; g.node_count()];
        let split = Split::new(&g, &members, &mut slot);
        let (a, va) = split.leading();
        let (b, vb) = split.power_iteration();
        assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{a} {b}");
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        assert!(dot.abs() > 0.999);
    }

    #[test]
    fn implicit_product_matches_dense_matrix() {
        let g = planted(2, 10, 0.5, 0.1, 3);
        let members: Vec<usize> = (0..g.node_count()).step_by(2).collect();
        let mut slot = vec![usize::MAX; g.node_count()];
        let split = Split::new(&g, &members, &mut slot);
        let x: Vec<f64> = (0..members.len()).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; x.len()];
        split.apply(&x, &mut y);
        let dense = split.dense() * nalgebra::DVector::from_vec(x);
        for (a, b) in y.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
