//! Hash-keyed block store and per-transaction block lists.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::BuildingBlock;
use crate::error::{Diagnostics, Error, Result};
use crate::types::{BlockHash, TxHash};

/// Blocks extracted from one transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxBlocks {
    pub tx_hash: TxHash,
    pub block_number: u64,
    /// Protocol of the external call's target, if it is a protocol vertex.
    pub root_protocol: Option<String>,
    /// Every emitted block, in processing order.
    pub blocks: Vec<BlockHash>,
    /// Hash leaves of the residual tree, in execution order.
    pub outermost: Vec<BlockHash>,
}

impl TxBlocks {
    pub fn write_jsonl<W: Write>(mut writer: W, txs: &[TxBlocks]) -> Result<()> {
        for tx in txs {
            serde_json::to_writer(&mut writer, tx)?;
            writer.write_all(b"\n").map_err(|e| Error::io("<tx blocks>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<TxBlocks>> {
        read_lines(reader)
    }
}

fn read_lines<R: BufRead, T: for<'de> Deserialize<'de>>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredBlock {
    #[serde(flatten)]
    pub block: BuildingBlock,
    pub occurrence_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockStore {
    blocks: BTreeMap<BlockHash, StoredBlock>,
}

impl BlockStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one occurrence. A hash seen before keeps its first block.
    pub fn insert(&mut self, block: BuildingBlock) {
        match self.blocks.get_mut(&block.hash) {
            Some(stored) => {
                if stored.block.root_protocol != block.root_protocol {
                    log::warn!(
                        "block {} seen under protocols {} and {}",
                        block.hash,
                        stored.block.root_protocol,
                        block.root_protocol
                    );
                }
                stored.occurrence_count += 1;
            }
            None => {
                self.blocks.insert(
                    block.hash,
                    StoredBlock {
                        block,
                        occurrence_count: 1,
                    },
                );
            }
        }
    }

    pub fn get(&self, hash: &BlockHash) -> Option<&StoredBlock> {
        self.blocks.get(hash)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Stored blocks in ascending hash order.
    pub fn iter(&self) -> impl Iterator<Item = &StoredBlock> {
        self.blocks.values()
    }

    pub fn total_occurrences(&self) -> u64 {
        self.blocks.values().map(|b| b.occurrence_count).sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for b in self.blocks.values() {
            serde_json::to_writer(&mut writer, b)?;
            writer.write_all(b"\n").map_err(|e| Error::io("<block store>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let rows: Vec<StoredBlock> = read_lines(reader)?;
        Ok(BlockStore {
            blocks: rows.into_iter().map(|b| (b.block.hash, b)).collect(),
        })
    }
}

impl FromIterator<BuildingBlock> for BlockStore {
    fn from_iter<I: IntoIterator<Item = BuildingBlock>>(iter: I) -> Self {
        let mut store = BlockStore::new();
        for b in iter {
            store.insert(b);
        }
        store
    }
}

/// `(root_protocol, hash)` for a block and, recursively, every nested child.
/// Children missing from the store are reported and skipped.
pub fn flatten_block(
    block: &BuildingBlock,
    store: &BlockStore,
    diags: &mut Diagnostics,
) -> Result<Vec<(String, BlockHash)>> {
    fn walk(
        block: &BuildingBlock,
        store: &BlockStore,
        path: &mut HashSet<BlockHash>,
        out: &mut Vec<(String, BlockHash)>,
        diags: &mut Diagnostics,
    ) -> Result<()> {
        if !path.insert(block.hash) {
            return Err(Error::BlockCycle(block.hash.to_hex()));
        }
        out.push((block.root_protocol.clone(), block.hash));
        for child in &block.child_hashes {
            match store.get(child) {
                Some(c) => walk(&c.block, store, path, out, diags)?,
                None => diags.push(format!("block {} references unknown child {child}", block.hash)),
            }
        }
        path.remove(&block.hash);
        Ok(())
    }
    let mut out = Vec::new();
    walk(block, store, &mut HashSet::new(), &mut out, diags)?;
    Ok(out)
}
