//! Block frequencies, first-level composition and cross-protocol matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::blocks::{flatten_block, BlockStore, BuildingBlock, TxBlocks};
use crate::error::{Diagnostics, Error, Result};
use crate::types::{BlockHash, MethodId};

/// Column and set name for transactions without blocks.
pub const NONE: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockCount {
    pub hash: BlockHash,
    pub root_protocol: String,
    pub root_method_id: Option<MethodId>,
    pub count: u64,
}

/// Occurrences per hash, most frequent first, ties by hash.
pub fn count_blocks<'a>(blocks: impl IntoIterator<Item = &'a BuildingBlock>) -> Vec<BlockCount> {
    let mut map: HashMap<BlockHash, BlockCount> = HashMap::new();
    for b in blocks {
        map.entry(b.hash)
            .or_insert_with(|| BlockCount {
                hash: b.hash,
                root_protocol: b.root_protocol.clone(),
                root_method_id: b.root_method_id,
                count: 0,
            })
            .count += 1;
    }
    let mut out: Vec<BlockCount> = map.into_values().collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(a.hash.cmp(&b.hash)));
    out
}

/// Frequency table straight from a store's occurrence counts.
pub fn counts_from_store(store: &BlockStore) -> Vec<BlockCount> {
    let mut out: Vec<BlockCount> = store
        .iter()
        .map(|s| BlockCount {
            hash: s.block.hash,
            root_protocol: s.block.root_protocol.clone(),
            root_method_id: s.block.root_method_id,
            count: s.occurrence_count,
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(a.hash.cmp(&b.hash)));
    out
}

pub fn write_block_counts<W: Write>(writer: W, counts: &[BlockCount]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "hash", "root_protocol", "root_method_id", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            c.hash.to_hex(),
            c.root_protocol.clone(),
            c.root_method_id.map_or_else(String::new, |m| m.to_hex()),
            c.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<block counts>", e))?;
    Ok(())
}

/// Root protocols of blocks nested directly inside the outermost blocks of
/// `tx_root_protocol`. `blocks_of_tx` is one transaction's extraction output
/// in processing order. An empty set stands for [`NONE`].
pub fn first_level_composition(tx_root_protocol: &str, blocks_of_tx: &[BuildingBlock]) -> BTreeSet<String> {
    // occurrences not consumed as someone's child are outermost
    let mut free: HashMap<BlockHash, i64> = HashMap::new();
    for b in blocks_of_tx {
        *free.entry(b.hash).or_default() += 1;
        for c in &b.child_hashes {
            *free.entry(*c).or_default() -= 1;
        }
    }
    let by_hash: HashMap<BlockHash, &BuildingBlock> = blocks_of_tx.iter().map(|b| (b.hash, b)).collect();
    let mut out = BTreeSet::new();
    for b in blocks_of_tx {
        if b.root_protocol != tx_root_protocol {
            continue;
        }
        let slot = free.get_mut(&b.hash).expect("counted above");
        if *slot <= 0 {
            continue;
        }
        *slot -= 1;
        for c in &b.child_hashes {
            if let Some(child) = by_hash.get(c) {
                out.insert(child.root_protocol.clone());
            }
        }
    }
    out
}

pub fn protocol_set_name(set: &BTreeSet<String>) -> String {
    if set.is_empty() {
        NONE.to_string()
    } else {
        set.iter().cloned().collect::<Vec<_>>().join("+")
    }
}

/// Per-transaction view used by the composition reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxComposition {
    pub root_protocol: String,
    pub first_level: BTreeSet<String>,
    /// Every block at every nesting level, as `(root_protocol, hash)`.
    pub flattened: Vec<(String, BlockHash)>,
}

/// Joins per-transaction hashes with the store. Transactions whose external
/// call does not target a protocol are skipped.
pub fn tx_compositions(txs: &[TxBlocks], store: &BlockStore, diags: &mut Diagnostics) -> Result<Vec<TxComposition>> {
    let mut out = Vec::new();
    for tx in txs {
        let Some(root) = &tx.root_protocol else { continue };
        let mut blocks = Vec::with_capacity(tx.blocks.len());
        for h in &tx.blocks {
            match store.get(h) {
                Some(s) => blocks.push(s.block.clone()),
                None => diags.push(format!("{}: block {h} missing from store", tx.tx_hash)),
            }
        }
        let mut flattened = Vec::new();
        for h in &tx.outermost {
            if let Some(s) = store.get(h) {
                flattened.extend(flatten_block(&s.block, store, diags)?);
            }
        }
        out.push(TxComposition {
            root_protocol: root.clone(),
            first_level: first_level_composition(root, &blocks),
            flattened,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreemapRow {
    pub root_protocol: String,
    pub protocol_set: String,
    pub tx_count: u64,
    /// Fraction of the root protocol's transactions.
    pub share: f64,
}

/// Each transaction counted once under its first-level protocol set.
pub fn treemap<'a>(txs: impl IntoIterator<Item = &'a TxComposition>) -> Vec<TreemapRow> {
    let mut counts: BTreeMap<(&str, String), u64> = BTreeMap::new();
    let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
    for tx in txs {
        *counts
            .entry((tx.root_protocol.as_str(), protocol_set_name(&tx.first_level)))
            .or_default() += 1;
        *totals.entry(tx.root_protocol.as_str()).or_default() += 1;
    }
    let mut rows: Vec<TreemapRow> = counts
        .into_iter()
        .map(|((root, set), n)| TreemapRow {
            root_protocol: root.to_string(),
            protocol_set: set,
            tx_count: n,
            share: n as f64 / totals[root] as f64,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.root_protocol
            .cmp(&b.root_protocol)
            .then(b.tx_count.cmp(&a.tx_count))
            .then(a.protocol_set.cmp(&b.protocol_set))
    });
    rows
}

pub fn write_treemap<W: Write>(writer: W, rows: &[TreemapRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["root_protocol", "protocol_set", "tx_count", "share"])?;
    for r in rows {
        w.write_record([
            r.root_protocol.clone(),
            r.protocol_set.clone(),
            r.tx_count.to_string(),
            format!("{:.4}", r.share),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<treemap>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionMatrix {
    pub rows: Vec<String>,
    /// Block protocols; the NONE column is kept separately.
    pub columns: Vec<String>,
    /// Fraction of the row's transactions containing a block of the column protocol.
    pub cells: Vec<Vec<f64>>,
    /// Fraction of the row's transactions without any block.
    pub none: Vec<f64>,
    pub row_tx_counts: Vec<u64>,
    /// Mean number of column-protocol blocks per row transaction.
    pub blocks_per_tx: Vec<Vec<f64>>,
}

/// Rows are `protocols` that received at least one transaction; rows with
/// none are dropped with a diagnostic. Columns cover `protocols` plus any
/// block protocol observed.
pub fn build_composition_matrix<'a>(
    protocols: &[String],
    txs: impl IntoIterator<Item = &'a TxComposition>,
    diags: &mut Diagnostics,
) -> CompositionMatrix {
    #[derive(Default)]
    struct Row {
        txs: u64,
        empty: u64,
        containing: BTreeMap<String, u64>,
        blocks: BTreeMap<String, u64>,
    }
    let mut rows: BTreeMap<String, Row> = BTreeMap::new();
    let mut columns: BTreeSet<String> = protocols.iter().cloned().collect();
    for tx in txs {
        let row = rows.entry(tx.root_protocol.clone()).or_default();
        row.txs += 1;
        if tx.flattened.is_empty() {
            row.empty += 1;
        }
        let mut seen = BTreeSet::new();
        for (p, _) in &tx.flattened {
            *row.blocks.entry(p.clone()).or_default() += 1;
            if seen.insert(p) {
                *row.containing.entry(p.clone()).or_default() += 1;
            }
            columns.insert(p.clone());
        }
    }
    for p in protocols {
        if !rows.contains_key(p) {
            diags.push(format!("composition row {p} omitted: no transactions"));
        }
    }
    let columns: Vec<String> = columns.into_iter().collect();
    let mut m = CompositionMatrix {
        rows: Vec::new(),
        columns: columns.clone(),
        cells: Vec::new(),
        none: Vec::new(),
        row_tx_counts: Vec::new(),
        blocks_per_tx: Vec::new(),
    };
    for (name, row) in rows {
        let n = row.txs as f64;
        let frac = |map: &BTreeMap<String, u64>, c: &String| map.get(c).copied().unwrap_or(0) as f64 / n;
        m.cells.push(columns.iter().map(|c| frac(&row.containing, c)).collect());
        m.blocks_per_tx
            .push(columns.iter().map(|c| frac(&row.blocks, c)).collect());
        m.none.push(row.empty as f64 / n);
        m.row_tx_counts.push(row.txs);
        m.rows.push(name);
    }
    m
}

impl CompositionMatrix {
    /// Containment fractions with four decimals, NONE last, then the row count.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write(writer, &self.cells, true)
    }

    /// Mean blocks per transaction, with the row's overall mean last.
    pub fn write_blocks_per_tx_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.write(writer, &self.blocks_per_tx, false)
    }

    fn write<W: Write>(&self, writer: W, cells: &[Vec<f64>], containment: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["protocol".to_string()];
        header.extend(self.columns.iter().cloned());
        header.push(if containment {
            NONE.to_string()
        } else {
            "all".to_string()
        });
        header.push("tx_count".to_string());
        w.write_record(&header)?;
        for (i, name) in self.rows.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(cells[i].iter().map(|v| format!("{v:.4}")));
            let last = if containment {
                self.none[i]
            } else {
                cells[i].iter().sum()
            };
            rec.push(format!("{last:.4}"));
            rec.push(self.row_tx_counts[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<composition matrix>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Label;

    fn blk(id: u8, protocol: &str, children: &[u8]) -> BuildingBlock {
        BuildingBlock {
            hash: BlockHash([id; 32]),
            root_protocol: protocol.into(),
            root_method_id: None,
            vertex_labels: vec![Label::Asset],
            outdegrees: vec![0],
            method_ids: vec![None],
            edges: vec![],
            child_hashes: children.iter().map(|&c| BlockHash([c; 32])).collect(),
        }
    }

    fn tx(root: &str, protocols: &[&str]) -> TxComposition {
        TxComposition {
            root_protocol: root.into(),
            first_level: BTreeSet::new(),
            flattened: protocols.iter().map(|p| (p.to_string(), BlockHash([0; 32]))).collect(),
        }
    }

    #[test]
    fn counts_sorted_by_frequency_then_hash() {
        assert!(count_blocks([]).is_empty());
        let (a, b) = (blk(2, "x", &[]), blk(1, "y", &[]));
        let c = count_blocks([&a, &b, &a]);
        assert_eq!(
            c.iter().map(|c| (c.hash, c.count)).collect::<Vec<_>>(),
            vec![(a.hash, 2), (b.hash, 1)]
        );
        let c = count_blocks([&a, &b]);
        assert_eq!(c[0].hash, b.hash);
    }

    #[test]
    fn first_level_follows_outermost_root_blocks() {
        assert!(first_level_composition("x", &[]).is_empty());
        let blocks = [blk(1, "uni", &[]), blk(2, "sushi", &[]), blk(3, "1inch", &[1, 2])];
        let set = first_level_composition("1inch", &blocks);
        assert_eq!(protocol_set_name(&set), "sushi+uni");
        // a nested 1inch block is not outermost
        let nested = [blk(1, "uni", &[]), blk(4, "1inch", &[1]), blk(5, "1inch", &[4])];
        assert_eq!(protocol_set_name(&first_level_composition("1inch", &nested)), "1inch");
    }

    #[test]
    fn matrix_arithmetic() {
        let txs = [
            tx("x", &["y", "y", "x"]),
            tx("x", &["y"]),
            tx("x", &[]),
            tx("x", &["x"]),
        ];
        let mut d = Diagnostics::default();
        let m = build_composition_matrix(&["x".to_string(), "z".to_string()], &txs, &mut d);
        assert_eq!(m.rows, vec!["x"]);
        assert_eq!(m.columns, vec!["x", "y", "z"]);
        assert_eq!(m.cells[0], vec![0.5, 0.5, 0.0]);
        assert_eq!(m.none[0], 0.25);
        assert_eq!(m.blocks_per_tx[0], vec![0.5, 0.75, 0.0]);
        assert_eq!(d.len(), 1);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "protocol,x,y,z,NONE,tx_count\nx,0.5000,0.5000,0.0000,0.2500,4\n"
        );
    }

    #[test]
    fn diagonal_only_row() {
        let txs = [tx("d", &["d"]), tx("d", &["d", "d"])];
        let m = build_composition_matrix(&[], &txs, &mut Diagnostics::default());
        assert_eq!(m.cells[0], vec![1.0]);
        assert_eq!(m.none[0], 0.0);
    }

    #[test]
    fn treemap_counts_each_tx_once() {
        let mut a = tx("1inch", &[]);
        a.first_level = ["uni".to_string()].into();
        let b = a.clone();
        let c = tx("1inch", &[]);
        let rows = treemap([&a, &b, &c]);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].protocol_set.as_str(), rows[0].tx_count), ("uni", 2));
        assert_eq!(rows[1].protocol_set, NONE);
        assert!((rows[0].share - 2.0 / 3.0).abs() < 1e-12);
    }
}
