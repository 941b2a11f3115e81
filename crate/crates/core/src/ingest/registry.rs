use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::Serialize;

use super::{Status, TraceRecord, TraceType};
use crate::error::{Diagnostics, Error, Result};
use crate::types::{Address, MethodId};

/// The six mandatory ERC20 function selectors: totalSupply, balanceOf,
/// transfer, transferFrom, approve, allowance.
pub const ERC20_SELECTORS: [MethodId; 6] = [
    MethodId::new([0x18, 0x16, 0x0d, 0xdd]),
    MethodId::new([0x70, 0xa0, 0x82, 0x31]),
    MethodId::new([0xa9, 0x05, 0x9c, 0xbb]),
    MethodId::new([0x23, 0xb8, 0x72, 0xdd]),
    MethodId::new([0x09, 0x5e, 0xa7, 0xb3]),
    MethodId::new([0xdd, 0x62, 0xed, 0x3e]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ContractInfo {
    pub is_contract: bool,
    pub creator: Option<Address>,
    pub created_block: Option<u64>,
    pub is_erc20: bool,
}

/// Known code accounts with their creator links.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContractRegistry {
    entries: HashMap<Address, ContractInfo>,
}

impl ContractRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, addr: &Address) -> Option<&ContractInfo> {
        self.entries.get(addr)
    }

    pub fn is_contract(&self, addr: &Address) -> bool {
        self.entries.get(addr).is_some_and(|c| c.is_contract)
    }

    pub fn is_erc20(&self, addr: &Address) -> bool {
        self.entries.get(addr).is_some_and(|c| c.is_erc20)
    }

    pub fn creator(&self, addr: &Address) -> Option<Address> {
        self.entries.get(addr).and_then(|c| c.creator)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Address, &ContractInfo)> {
        self.entries.iter()
    }

    /// Record a created contract. Returns false (and leaves the entry alone)
    /// if the address already has a creator.
    pub fn insert_created(&mut self, addr: Address, creator: Address, block: u64) -> bool {
        let e = self.entries.entry(addr).or_default();
        if e.creator.is_some() {
            return false;
        }
        e.is_contract = true;
        e.creator = Some(creator);
        e.created_block = Some(block);
        true
    }

    /// Mark a contract whose creation is unknown (e.g. genesis or pre-window).
    pub fn insert_contract(&mut self, addr: Address) {
        self.entries.entry(addr).or_default().is_contract = true;
    }

    pub fn set_erc20(&mut self, addr: Address) {
        let e = self.entries.entry(addr).or_default();
        e.is_contract = true;
        e.is_erc20 = true;
    }

    /// Map creator -> created addresses, each list sorted.
    pub fn children(&self) -> HashMap<Address, Vec<Address>> {
        let mut out: HashMap<Address, Vec<Address>> = HashMap::new();
        for (addr, info) in &self.entries {
            if let Some(c) = info.creator {
                out.entry(c).or_default().push(*addr);
            }
        }
        for v in out.values_mut() {
            v.sort_unstable();
        }
        out
    }

    /// Sorted dump: `address,is_contract,creator,created_block,is_erc20`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["address", "is_contract", "creator", "created_block", "is_erc20"])?;
        let mut keys: Vec<&Address> = self.entries.keys().collect();
        keys.sort_unstable();
        for a in keys {
            let e = &self.entries[a];
            w.write_record([
                a.to_hex(),
                e.is_contract.to_string(),
                e.creator.map(|c| c.to_hex()).unwrap_or_default(),
                e.created_block.map(|b| b.to_string()).unwrap_or_default(),
                e.is_erc20.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<registry dump>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut reg = ContractRegistry::new();
        for (i, row) in r.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            let bad = |what: &str| Error::Invalid(format!("registry line {line}: bad {what}"));
            let addr: Address = row
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|source| Error::Parse { line, source })?;
            let info = ContractInfo {
                is_contract: row.get(1).unwrap_or("").parse().map_err(|_| bad("is_contract"))?,
                creator: match row.get(2).unwrap_or("") {
                    "" => None,
                    s => Some(s.parse().map_err(|source| Error::Parse { line, source })?),
                },
                created_block: match row.get(3).unwrap_or("") {
                    "" => None,
                    s => Some(s.parse().map_err(|_| bad("created_block"))?),
                },
                is_erc20: row.get(4).unwrap_or("").parse().map_err(|_| bad("is_erc20"))?,
            };
            reg.entries.insert(addr, info);
        }
        Ok(reg)
    }
}

/// Build the registry from contract-creation rows.
///
/// Non-create and failed rows are skipped with a counted warning. When an
/// address is created twice the first creation by `(block_number,
/// trace_address)` wins.
pub fn build_contract_registry(
    creations: impl IntoIterator<Item = TraceRecord>,
    erc20_flags: Option<&HashSet<Address>>,
    diags: &mut Diagnostics,
) -> ContractRegistry {
    let mut rows: Vec<TraceRecord> = Vec::new();
    let mut skipped_type = 0usize;
    let mut skipped_failed = 0usize;
    for r in creations {
        if r.trace_type != TraceType::Create {
            skipped_type += 1;
        } else if r.status == Status::Failed {
            skipped_failed += 1;
        } else {
            rows.push(r);
        }
    }
    if skipped_type > 0 {
        diags.push(format!("skipped {skipped_type} non-create rows in creation input"));
    }
    if skipped_failed > 0 {
        diags.push(format!("skipped {skipped_failed} failed creation rows"));
    }
    rows.sort_by(|a, b| (a.block_number, &a.trace_address).cmp(&(b.block_number, &b.trace_address)));

    let mut reg = ContractRegistry::new();
    for r in rows {
        let Some(created) = r.to_address else {
            diags.push(format!(
                "creation in {} at [{}] has no created address",
                r.tx_hash,
                super::format_trace_address(&r.trace_address)
            ));
            continue;
        };
        if !reg.insert_created(created, r.from_address, r.block_number) {
            let kept = reg.creator(&created).expect("creator present");
            if kept != r.from_address {
                diags.push(format!(
                    "conflicting creators for {created}: kept {kept}, ignored {}",
                    r.from_address
                ));
            }
        }
    }
    if let Some(flags) = erc20_flags {
        for a in flags {
            reg.set_erc20(*a);
        }
    }
    reg
}

/// Read a one-address-per-line file (blank lines and `#` comments ignored).
pub fn read_address_set<R: Read>(reader: R) -> Result<HashSet<Address>> {
    let mut out = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<address list>", e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t == "address" {
            continue;
        }
        let a = t.parse().map_err(|source| Error::Parse {
            line: i as u64 + 1,
            source,
        })?;
        out.insert(a);
    }
    Ok(out)
}

fn contains_push4(code: &[u8], selector: &MethodId) -> bool {
    code.windows(5).any(|w| w[0] == 0x63 && w[1..] == selector.0[..])
}

/// Bytecode scan: `address,bytecode_hex` rows; an address qualifies when its
/// code pushes every one of [`ERC20_SELECTORS`] as a PUSH4 immediate.
pub fn erc20_from_bytecode<R: Read>(reader: R) -> Result<HashSet<Address>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = HashSet::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let line = i as u64 + 1;
        let a = row.get(0).unwrap_or("");
        if a == "address" {
            continue;
        }
        let addr: Address = a.parse().map_err(|source| Error::Parse { line, source })?;
        let raw = row.get(1).unwrap_or("");
        let code = hex::decode(raw.trim_start_matches("0x"))
            .map_err(|_| Error::Invalid(format!("line {line}: bytecode is not hex")))?;
        if ERC20_SELECTORS.iter().all(|s| contains_push4(&code, s)) {
            out.insert(addr);
        }
    }
    Ok(out)
}
