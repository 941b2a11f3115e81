//! Composition reports checked against a direct rescan of the raw trees.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use defi_compose::blocks::{extract_all, BlockStore};
use defi_compose::error::Diagnostics;
use defi_compose::ground_truth::{filter_protocol_traces, Category, ExtendedSeedSet, Origin, SeedEntry};
use defi_compose::ingest::{ContractRegistry, TraceEdge, TraceTree, TraceType, Vertex};
use defi_compose::reports::{build_composition_matrix, count_blocks, treemap, tx_compositions};
use defi_compose::types::{Address, MethodId, TxHash};

fn addr(n: u64) -> Address {
    Address::from_low_u64(n)
}

struct World {
    ext: ExtendedSeedSet,
    registry: ContractRegistry,
    pool: Vec<Address>,
}

fn world() -> World {
    let mut entries = Vec::new();
    let mut registry = ContractRegistry::new();
    let mut pool = Vec::new();
    for p in 1..=4u64 {
        for k in 1..=3 {
            let a = addr(100 * p + k);
            entries.push(SeedEntry {
                address: a,
                protocol: format!("p{p}"),
                category: Category::Lending,
                label: String::new(),
                origin: if k == 3 { Origin::Extended } else { Origin::Seed },
            });
            registry.insert_contract(a);
            pool.push(a);
        }
    }
    for n in 900..906 {
        registry.insert_contract(addr(n));
        if n < 903 {
            registry.set_erc20(addr(n));
        }
        pool.push(addr(n));
    }
    World {
        ext: ExtendedSeedSet::from_entries(entries),
        registry,
        pool,
    }
}

/// Random tree in preorder: each new vertex hangs from a vertex on the
/// current root path, so edge order is execution order.
fn random_tree(rng: &mut ChaCha8Rng, w: &World, id: u64) -> TraceTree {
    let n = rng.random_range(2..=14);
    let mut vertices = vec![Vertex::account(addr(7000 + id % 50))];
    let mut edges = Vec::new();
    let mut path = vec![0usize];
    for v in 1..n {
        let keep = if v == 1 { 1 } else { rng.random_range(2..=path.len()) };
        path.truncate(keep);
        let parent = *path.last().unwrap();
        vertices.push(Vertex::account(w.pool[rng.random_range(0..w.pool.len())]));
        edges.push(TraceEdge {
            parent,
            child: v,
            t: edges.len() as u32,
            method: Some(MethodId([0xa9, 0x05, 0x9c, rng.random_range(0xba..0xbd)])),
            trace_type: TraceType::Call,
            failed: false,
            in_failed_subtree: false,
        });
        path.push(v);
    }
    let mut hash = [0u8; 32];
    hash[..8].copy_from_slice(&id.to_be_bytes());
    TraceTree {
        tx_hash: TxHash(hash),
        block_number: id,
        vertices,
        edges,
    }
}

struct Expected {
    txs: u64,
    empty: u64,
    containing: BTreeMap<String, u64>,
    blocks: BTreeMap<String, u64>,
}

/// A block exists for every non-root protocol vertex that has a child.
fn rescan(trees: &[TraceTree], ext: &ExtendedSeedSet) -> BTreeMap<String, Expected> {
    let mut rows: BTreeMap<String, Expected> = BTreeMap::new();
    for t in trees {
        let protocol = |v: usize| {
            t.vertices[v]
                .address
                .and_then(|a| ext.protocol_of(&a))
                .map(str::to_string)
        };
        let root = protocol(1).expect("filtered to protocol traces");
        let row = rows.entry(root).or_insert(Expected {
            txs: 0,
            empty: 0,
            containing: BTreeMap::new(),
            blocks: BTreeMap::new(),
        });
        row.txs += 1;
        let mut seen = BTreeSet::new();
        for v in 1..t.vertices.len() {
            let has_child = t.edges.iter().any(|e| e.parent == v);
            if let (Some(p), true) = (protocol(v), has_child) {
                *row.blocks.entry(p.clone()).or_default() += 1;
                seen.insert(p);
            }
        }
        if seen.is_empty() {
            row.empty += 1;
        }
        for p in seen {
            *row.containing.entry(p).or_default() += 1;
        }
    }
    rows
}

#[test]
fn composition_matrix_matches_rescan() {
    let w = world();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let trees: Vec<TraceTree> = (0..3000).map(|i| random_tree(&mut rng, &w, i)).collect();
    let trees = filter_protocol_traces(trees, &w.ext);
    assert!(trees.len() > 1000);

    let results = extract_all(&trees, &w.ext, &w.registry, false);
    let mut store = BlockStore::new();
    let txs: Vec<_> = results
        .into_iter()
        .map(|(tx, blocks)| {
            blocks.into_iter().for_each(|b| store.insert(b));
            tx
        })
        .collect();
    let mut diags = Diagnostics::default();
    let comps = tx_compositions(&txs, &store, &mut diags).unwrap();
    let m = build_composition_matrix(&w.ext.protocols(), &comps, &mut diags);
    assert!(diags.is_empty(), "{diags:?}");

    let expected = rescan(&trees, &w.ext);
    assert_eq!(m.rows, expected.keys().cloned().collect::<Vec<_>>());
    for (i, row) in m.rows.iter().enumerate() {
        let e = &expected[row];
        let n = e.txs as f64;
        assert_eq!(m.row_tx_counts[i], e.txs);
        assert_eq!(m.none[i], e.empty as f64 / n, "row {row}");
        for (j, col) in m.columns.iter().enumerate() {
            let c = e.containing.get(col).copied().unwrap_or(0) as f64 / n;
            let b = e.blocks.get(col).copied().unwrap_or(0) as f64 / n;
            assert_eq!(m.cells[i][j], c, "containment {row}/{col}");
            assert_eq!(m.blocks_per_tx[i][j], b, "blocks {row}/{col}");
        }
    }

    // every block occurrence is counted once across the store
    let total: u64 = expected.values().flat_map(|e| e.blocks.values()).sum();
    assert_eq!(store.total_occurrences(), total);
    let counted: u64 = count_blocks(store.iter().map(|s| &s.block))
        .iter()
        .map(|c| c.count)
        .sum();
    assert_eq!(counted, store.len() as u64);

    // treemap: one row per (root, set) and shares summing to one per root
    let rows = treemap(&comps);
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for r in &rows {
        *sums.entry(r.root_protocol.as_str()).or_default() += r.share;
    }
    for (root, s) in sums {
        assert!((s - 1.0).abs() < 1e-12, "{root}: {s}");
    }
}
