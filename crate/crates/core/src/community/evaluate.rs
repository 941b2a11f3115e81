//! Partition quality against protocol labels.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Algorithm, CommunityGraph, Partition};
use crate::error::{Error, Result};
use crate::ground_truth::ExtendedSeedSet;
use crate::network::NodeId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNorm {
    #[default]
    Arithmetic,
    Geometric,
    Max,
    Min,
}

impl std::str::FromStr for NmiNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "arithmetic" | "sum" => Ok(NmiNorm::Arithmetic),
            "geometric" | "sqrt" => Ok(NmiNorm::Geometric),
            "max" => Ok(NmiNorm::Max),
            "min" => Ok(NmiNorm::Min),
            _ => Err(Error::Invalid(format!("unknown NMI normalization {s:?}"))),
        }
    }
}

fn entropy(mut counts: Vec<usize>, n: f64) -> f64 {
    counts.sort_unstable();
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information between two labelings of the same items.
pub fn nmi(x: &[usize], y: &[usize], norm: NmiNorm) -> f64 {
    assert_eq!(x.len(), y.len(), "labelings differ in length");
    let n = x.len() as f64;
    let mut cx: HashMap<usize, usize> = HashMap::new();
    let mut cy: HashMap<usize, usize> = HashMap::new();
    let mut cxy: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *cx.entry(a).or_default() += 1;
        *cy.entry(b).or_default() += 1;
        *cxy.entry((a, b)).or_default() += 1;
    }
    let hx = entropy(cx.into_values().collect(), n);
    let hy = entropy(cy.into_values().collect(), n);
    let hxy = entropy(cxy.into_values().collect(), n);
    if hx == 0.0 && hy == 0.0 {
        return 1.0;
    }
    let denom = match norm {
        NmiNorm::Arithmetic => (hx + hy) / 2.0,
        NmiNorm::Geometric => (hx * hy).sqrt(),
        NmiNorm::Max => hx.max(hy),
        NmiNorm::Min => hx.min(hy),
    };
    if denom == 0.0 {
        return 0.0;
    }
    ((hx + hy - hxy) / denom).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolMatch {
    pub protocol: String,
    pub community: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_communities_with_labels: usize,
    pub n_protocols: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// NMI over labeled nodes only.
    pub nmi: f64,
    /// NMI over every node, unlabeled nodes forming one extra class.
    pub nmi_all_nodes: f64,
    pub community_ratio: f64,
    pub matches: Vec<ProtocolMatch>,
}

fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn node_protocol<'a>(id: &'a NodeId, ext: &'a ExtendedSeedSet) -> Option<&'a str> {
    match id {
        NodeId::Address(a) => ext.protocol_of(a),
        NodeId::Protocol(p) => Some(p),
    }
}

/// Scores a partition of `g` against the protocol labels in `ext`.
pub fn evaluate_partition(
    g: &CommunityGraph,
    p: &Partition,
    ext: &ExtendedSeedSet,
    norm: NmiNorm,
) -> Result<EvaluationReport> {
    if p.assignment.len() != g.node_count() {
        return Err(Error::Invalid(format!(
            "partition covers {} nodes, graph has {}",
            p.assignment.len(),
            g.node_count()
        )));
    }
    let mut protocol_ids: BTreeMap<&str, usize> = BTreeMap::new();
    let labels: Vec<Option<&str>> = g.nodes().iter().map(|id| node_protocol(id, ext)).collect();
    for l in labels.iter().flatten() {
        let next = protocol_ids.len();
        protocol_ids.entry(l).or_insert(next);
    }
    if protocol_ids.is_empty() {
        return Err(Error::Invalid("no labeled nodes in the graph".into()));
    }

    let mut truth = Vec::new();
    let mut found = Vec::new();
    let mut protocol_size: BTreeMap<&str, usize> = BTreeMap::new();
    let mut labeled_in: BTreeMap<usize, usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for (label, &c) in labels.iter().zip(&p.assignment) {
        if let Some(l) = label {
            truth.push(protocol_ids[l]);
            found.push(c);
            *protocol_size.entry(l).or_default() += 1;
            *labeled_in.entry(c).or_default() += 1;
            *overlap.entry((l, c)).or_default() += 1;
        }
    }

    let mut matches = Vec::new();
    for (&protocol, &size) in &protocol_size {
        let mut best: Option<ProtocolMatch> = None;
        for (&(_, community), &inter) in overlap.range((protocol, 0)..=(protocol, usize::MAX)) {
            let precision = inter as f64 / labeled_in[&community] as f64;
            let recall = inter as f64 / size as f64;
            let f1 = f1_score(precision, recall);
            if best.as_ref().is_none_or(|b| f1 > b.f1) {
                best = Some(ProtocolMatch {
                    protocol: protocol.to_string(),
                    community,
                    precision,
                    recall,
                    f1,
                });
            }
        }
        matches.push(best.expect("protocol has labeled nodes"));
    }

    let k = matches.len() as f64;
    let mean = |f: fn(&ProtocolMatch) -> f64| matches.iter().map(f).sum::<f64>() / k;
    let unlabeled = protocol_ids.len();
    let all_truth: Vec<usize> = labels
        .iter()
        .map(|l| l.map_or(unlabeled, |l| protocol_ids[l]))
        .collect();

    Ok(EvaluationReport {
        n_communities_with_labels: labeled_in.len(),
        n_protocols: protocol_size.len(),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        nmi: nmi(&truth, &found, norm),
        nmi_all_nodes: nmi(&all_truth, &p.assignment, norm),
        community_ratio: labeled_in.len() as f64 / protocol_size.len() as f64,
        matches,
    })
}

/// One row per algorithm: communities, precision, recall, F1, NMI, ratio.
/// Algorithms that could not be scored keep their row with the reason.
pub fn write_evaluation_table<W: Write>(
    writer: W,
    rows: &[(Algorithm, std::result::Result<EvaluationReport, String>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "algorithm",
        "status",
        "communities",
        "precision",
        "recall",
        "f1",
        "nmi",
        "nmi_all_nodes",
        "community_ratio",
    ])?;
    for (alg, r) in rows {
        let mut rec = vec![alg.as_str().to_string()];
        match r {
            Ok(r) => {
                rec.push("ok".into());
                rec.push(r.n_communities_with_labels.to_string());
                for v in [r.precision, r.recall, r.f1, r.nmi, r.nmi_all_nodes, r.community_ratio] {
                    rec.push(format!("{v:.4}"));
                }
            }
            Err(e) => {
                rec.push(format!("unavailable: {e}"));
                rec.extend(std::iter::repeat_n(String::new(), 7));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<evaluation table>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::community::tests::ids;
    use crate::ground_truth::{Category, Origin, SeedEntry};
    use crate::types::Address;
    use proptest::prelude::*;

    fn labels(protocols: &[&str]) -> ExtendedSeedSet {
        ExtendedSeedSet::from_entries(
            protocols
                .iter()
                .enumerate()
                .filter(|(_, p)| !p.is_empty())
                .map(|(i, p)| SeedEntry {
                    address: Address::from_low_u64(i as u64 + 1),
                    protocol: p.to_string(),
                    category: Category::Dex,
                    label: p.to_string(),
                    origin: Origin::Seed,
                }),
        )
    }

    fn graph(n: usize) -> CommunityGraph {
        CommunityGraph::from_edges(ids(n), [])
    }

    #[test]
    fn perfect_partition_scores_one() {
        let ext = labels(&["a", "a", "b", "b", "b", "c"]);
        let p = Partition::new(Algorithm::Louvain, 0, vec![5, 5, 2, 2, 2, 9]);
        let r = evaluate_partition(&graph(6), &p, &ext, NmiNorm::Arithmetic).unwrap();
        for v in [r.precision, r.recall, r.f1, r.nmi, r.community_ratio] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.n_communities_with_labels, 3);
    }

    #[test]
    fn one_community_two_protocols() {
        let ext = labels(&["a", "a", "b", "b"]);
        let p = Partition::new(Algorithm::Louvain, 0, vec![0; 4]);
        let r = evaluate_partition(&graph(4), &p, &ext, NmiNorm::Arithmetic).unwrap();
        assert_eq!(r.precision, 0.5);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.community_ratio, 0.5);
        assert_eq!(r.nmi, 0.0);
    }

    #[test]
    fn unlabeled_nodes_do_not_dilute_precision() {
        let ext = labels(&["a", "a", "", ""]);
        let p = Partition::new(Algorithm::Louvain, 0, vec![0; 4]);
        let r = evaluate_partition(&graph(4), &p, &ext, NmiNorm::Arithmetic).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.nmi, 1.0);
        assert!(r.nmi_all_nodes < 1.0);
    }

    #[test]
    fn no_labels_is_an_error() {
        let ext = labels(&[""]);
        let p = Partition::new(Algorithm::Louvain, 0, vec![0; 3]);
        assert!(evaluate_partition(&graph(3), &p, &ext, NmiNorm::Arithmetic).is_err());
    }

    #[test]
    fn nmi_known_value() {
        // x = [0,0,1,1], y = [0,0,0,1]: I = H(y) - H(y|x) with H(y|x) = ln 2 / 2
        let x = [0, 0, 1, 1];
        let y = [0, 0, 0, 1];
        let hx = 2f64.ln();
        let hy = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let i = hy - 0.5 * 2f64.ln();
        assert!((nmi(&x, &y, NmiNorm::Arithmetic) - 2.0 * i / (hx + hy)).abs() < 1e-12);
        assert!((nmi(&x, &y, NmiNorm::Geometric) - i / (hx * hy).sqrt()).abs() < 1e-12);
        assert!((nmi(&x, &y, NmiNorm::Max) - i / hx).abs() < 1e-12);
        assert!((nmi(&x, &y, NmiNorm::Min) - i / hy).abs() < 1e-12);
    }

    fn relabel(x: &[usize], perm: &[usize]) -> Vec<usize> {
        x.iter().map(|&c| perm[c]).collect()
    }

    proptest! {
        #[test]
        fn nmi_is_symmetric(x in prop::collection::vec(0usize..5, 2..60), seed in any::<u64>()) {
            let y: Vec<usize> = x.iter().enumerate().map(|(i, c)| (c * 7 + i + seed as usize) % 4).collect();
            for norm in [NmiNorm::Arithmetic, NmiNorm::Geometric, NmiNorm::Max, NmiNorm::Min] {
                prop_assert!((nmi(&x, &y, norm) - nmi(&y, &x, norm)).abs() < 1e-12);
            }
        }

        #[test]
        fn nmi_one_under_relabeling(x in prop::collection::vec(0usize..6, 1..60), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
            let y = relabel(&x, &perm);
            for norm in [NmiNorm::Arithmetic, NmiNorm::Geometric, NmiNorm::Max, NmiNorm::Min] {
                prop_assert_eq!(nmi(&x, &y, norm), 1.0);
            }
        }

        #[test]
        fn nmi_below_one_when_partitions_differ(x in prop::collection::vec(0usize..4, 2..40), flip in 0usize..40) {
            let mut y = x.clone();
            let i = flip % y.len();
            y[i] = 100;
            // distinct partitions unless x[i] was already a singleton class
            if x.iter().filter(|&&c| c == x[i]).count() > 1 {
                prop_assert!(nmi(&x, &y, NmiNorm::Arithmetic) < 1.0);
            }
        }

        #[test]
        fn ground_truth_community_never_lowers_best_f1(
            truth in prop::collection::vec(0usize..3, 4..30),
            found in prop::collection::vec(0usize..4, 30),
            pick in 0usize..3,
        ) {
            let names = ["a", "b", "c"];
            let protos: Vec<&str> = truth.iter().map(|&t| names[t]).collect();
            let ext = labels(&protos);
            let n = truth.len();
            let g = graph(n);
            let before = Partition::new(Algorithm::Louvain, 0, found[..n].to_vec());
            let r0 = evaluate_partition(&g, &before, &ext, NmiNorm::Arithmetic).unwrap();
            // carve protocol `pick` out into its own community
            let after: Vec<usize> = (0..n).map(|v| if truth[v] == pick { 99 } else { found[v] }).collect();
            let r1 = evaluate_partition(&g, &Partition::new(Algorithm::Louvain, 0, after), &ext, NmiNorm::Arithmetic).unwrap();
            let name = names[pick];
            if let (Some(a), Some(b)) = (
                r0.matches.iter().find(|m| m.protocol == name),
                r1.matches.iter().find(|m| m.protocol == name),
            ) {
                prop_assert!(b.f1 >= a.f1);
                prop_assert_eq!(b.f1, 1.0);
            }
        }
    }
}
