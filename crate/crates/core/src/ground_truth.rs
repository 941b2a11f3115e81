//! Curated protocol seed labels, their extension along creation links, and
//! the reduction of the trace set to protocol traces.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostics, Error, Result};
use crate::ingest::{ContractRegistry, TraceTree};
use crate::types::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Assets,
    Derivatives,
    Dex,
    Lending,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Assets,
        Category::Derivatives,
        Category::Dex,
        Category::Lending,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Assets => "assets",
            Category::Derivatives => "derivatives",
            Category::Dex => "dex",
            Category::Lending => "lending",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "assets" | "asset" => Ok(Category::Assets),
            "derivatives" | "derivative" => Ok(Category::Derivatives),
            "dex" | "dexes" | "exchange" => Ok(Category::Dex),
            "lending" | "lend" => Ok(Category::Lending),
            _ => Err(Error::Invalid(format!("unknown category {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Extended,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Seed => "seed",
            Origin::Extended => "extended",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub address: Address,
    pub protocol: String,
    pub category: Category,
    pub label: String,
    pub origin: Origin,
}

/// Manually curated seed labels, one entry per address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeedSet {
    entries: BTreeMap<Address, SeedEntry>,
}

impl SeedSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, a: &Address) -> Option<&SeedEntry> {
        self.entries.get(a)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SeedEntry> {
        self.entries.values()
    }

    /// Insert a seed; a conflicting protocol for an existing address is refused.
    pub fn insert(&mut self, entry: SeedEntry) -> Result<(), String> {
        match self.entries.get(&entry.address) {
            Some(prev) if prev.protocol != entry.protocol => Err(format!(
                "conflicting seed for {}: {} vs {}",
                entry.address, prev.protocol, entry.protocol
            )),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(
                    entry.address,
                    SeedEntry {
                        origin: Origin::Seed,
                        ..entry
                    },
                );
                Ok(())
            }
        }
    }

    pub fn category_totals(&self) -> BTreeMap<Category, usize> {
        let mut out: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
        for e in self.entries.values() {
            *out.entry(e.category).or_default() += 1;
        }
        out
    }
}

/// Load a seed file: header row, then `address,protocol,category,label`.
/// Duplicates with the same protocol collapse; a duplicate naming another
/// protocol is rejected with a diagnostic naming both.
pub fn load_seeds<R: Read>(reader: R, diags: &mut Diagnostics) -> Result<SeedSet> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut set = SeedSet::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.iter().all(str::is_empty) {
            continue;
        }
        if row.len() < 4 {
            diags.at_line(
                line,
                format!("rejected seed row: expected 4 columns, found {}", row.len()),
            );
            continue;
        }
        let address: Address = match row[0].to_ascii_lowercase().parse() {
            Ok(a) => a,
            Err(e) => {
                diags.at_line(line, format!("rejected seed row: {e}"));
                continue;
            }
        };
        let category: Category = match row[2].parse() {
            Ok(c) => c,
            Err(e) => {
                diags.at_line(line, format!("rejected seed row: {e}"));
                continue;
            }
        };
        let protocol = row[1].to_string();
        if protocol.is_empty() {
            diags.at_line(line, "rejected seed row: empty protocol");
            continue;
        }
        let entry = SeedEntry {
            address,
            protocol,
            category,
            label: row[3].to_string(),
            origin: Origin::Seed,
        };
        if let Err(msg) = set.insert(entry) {
            diags.at_line(line, format!("rejected {msg}"));
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionMode {
    /// Follow creator links transitively.
    #[default]
    Closure,
    /// Only contracts created directly by a seed address.
    OneHop,
}

/// Seed labels plus every contract inherited through creation links.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtendedSeedSet {
    entries: BTreeMap<Address, SeedEntry>,
    counts: BTreeMap<(String, Origin), usize>,
}

impl ExtendedSeedSet {
    pub fn from_entries(entries: impl IntoIterator<Item = SeedEntry>) -> Self {
        let mut s = ExtendedSeedSet {
            entries: entries.into_iter().map(|e| (e.address, e)).collect(),
            counts: BTreeMap::new(),
        };
        s.recount();
        s
    }

    fn recount(&mut self) {
        self.counts.clear();
        for e in self.entries.values() {
            *self.counts.entry((e.protocol.clone(), e.origin)).or_default() += 1;
        }
    }

    pub fn get(&self, a: &Address) -> Option<&SeedEntry> {
        self.entries.get(a)
    }

    pub fn contains(&self, a: &Address) -> bool {
        self.entries.contains_key(a)
    }

    pub fn protocol_of(&self, a: &Address) -> Option<&str> {
        self.entries.get(a).map(|e| e.protocol.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SeedEntry> {
        self.entries.values()
    }

    /// Per-(protocol, origin) multiplicities.
    pub fn counts(&self) -> &BTreeMap<(String, Origin), usize> {
        &self.counts
    }

    /// Sorted distinct protocol names.
    pub fn protocols(&self) -> Vec<String> {
        let mut v: Vec<String> = self.counts.keys().map(|(p, _)| p.clone()).collect();
        v.dedup();
        v
    }

    pub fn category_of_protocol(&self) -> HashMap<String, Category> {
        self.entries
            .values()
            .map(|e| (e.protocol.clone(), e.category))
            .collect()
    }

    /// (seed count, total count) per category.
    pub fn category_totals(&self) -> BTreeMap<Category, (usize, usize)> {
        let mut out: BTreeMap<Category, (usize, usize)> = Category::ALL.iter().map(|c| (*c, (0, 0))).collect();
        for e in self.entries.values() {
            let c = out.entry(e.category).or_default();
            if e.origin == Origin::Seed {
                c.0 += 1;
            }
            c.1 += 1;
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["address", "protocol", "category", "label", "origin"])?;
        for e in self.entries.values() {
            w.write_record([
                e.address.to_hex().as_str(),
                &e.protocol,
                e.category.as_str(),
                &e.label,
                e.origin.as_str(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<extended seeds>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for (i, row) in r.records().enumerate() {
            let row = row?;
            let line = i as u64 + 2;
            if row.len() != 5 {
                return Err(Error::Invalid(format!(
                    "extended seeds line {line}: expected 5 columns"
                )));
            }
            entries.push(SeedEntry {
                address: row[0].parse().map_err(|source| Error::Parse { line, source })?,
                protocol: row[1].to_string(),
                category: row[2].parse()?,
                label: row[3].to_string(),
                origin: match &row[4] {
                    "seed" => Origin::Seed,
                    "extended" => Origin::Extended,
                    o => return Err(Error::Invalid(format!("line {line}: unknown origin {o:?}"))),
                },
            });
        }
        Ok(Self::from_entries(entries))
    }
}

/// Extend seeds along creator links.
///
/// Every reached contract inherits protocol, category and label from the
/// nearest seed above it. A reached address that is itself a seed of another
/// protocol becomes an extended entry of the deploying protocol and its seed
/// entry is dropped; a same-protocol seed stays a seed.
pub fn extend_seeds(
    seeds: &SeedSet,
    registry: &ContractRegistry,
    mode: ExtensionMode,
    diags: &mut Diagnostics,
) -> ExtendedSeedSet {
    let children = registry.children();
    let mut out: BTreeMap<Address, SeedEntry> = seeds.iter().map(|e| (e.address, e.clone())).collect();

    let extended = |src: &SeedEntry, addr: Address| SeedEntry {
        address: addr,
        protocol: src.protocol.clone(),
        category: src.category,
        label: src.label.clone(),
        origin: Origin::Extended,
    };

    match mode {
        ExtensionMode::OneHop => {
            for s in seeds.iter() {
                for &c in children.get(&s.address).map(Vec::as_slice).unwrap_or(&[]) {
                    match seeds.get(&c) {
                        Some(other) if other.protocol == s.protocol => {}
                        Some(other) => {
                            diags.push(format!(
                                "seed {c} ({}) deployed by {} ({}); reassigned",
                                other.protocol, s.address, s.protocol
                            ));
                            out.insert(c, extended(s, c));
                        }
                        None => {
                            if let Some(prev) = out.get(&c) {
                                if prev.origin == Origin::Extended && prev.protocol != s.protocol {
                                    diags.push(format!("{c} reached from two protocols"));
                                }
                                continue;
                            }
                            out.insert(c, extended(s, c));
                        }
                    }
                }
            }
        }
        ExtensionMode::Closure => {
            // Roots: seeds with no seed anywhere up their creator chain.
            let mut roots = Vec::new();
            for s in seeds.iter() {
                let mut seen = HashSet::from([s.address]);
                let mut cur = s.address;
                let mut has_seed_ancestor = false;
                while let Some(p) = registry.creator(&cur) {
                    if !seen.insert(p) {
                        diags.push(format!("creator cycle detected above seed {}", s.address));
                        break;
                    }
                    if seeds.get(&p).is_some() {
                        has_seed_ancestor = true;
                        break;
                    }
                    cur = p;
                }
                if !has_seed_ancestor {
                    roots.push(s.address);
                }
            }

            let mut visited: HashSet<Address> = HashSet::new();
            let walk = |start: Address,
                        visited: &mut HashSet<Address>,
                        out: &mut BTreeMap<Address, SeedEntry>,
                        diags: &mut Diagnostics| {
                if !visited.insert(start) {
                    return;
                }
                let mut stack = vec![(start, out[&start].clone())];
                while let Some((node, src)) = stack.pop() {
                    for &c in children.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                        if !visited.insert(c) {
                            diags.push(format!("creator cycle or repeated creation reaching {c}"));
                            continue;
                        }
                        let next = match seeds.get(&c) {
                            Some(own) if own.protocol == src.protocol => own.clone(),
                            Some(own) => {
                                diags.push(format!(
                                    "seed {c} ({}) deployed by {} contracts; reassigned",
                                    own.protocol, src.protocol
                                ));
                                let e = extended(&src, c);
                                out.insert(c, e);
                                src.clone()
                            }
                            None => {
                                out.insert(c, extended(&src, c));
                                src.clone()
                            }
                        };
                        stack.push((c, next));
                    }
                }
            };
            for r in roots {
                walk(r, &mut visited, &mut out, diags);
            }
            // Seeds never reached sit on a creator cycle among seeds.
            for s in seeds.iter() {
                if !visited.contains(&s.address) {
                    diags.push(format!("seed {} lies on a creator cycle", s.address));
                    walk(s.address, &mut visited, &mut out, diags);
                }
            }
        }
    }

    let mut ext = ExtendedSeedSet {
        entries: out,
        counts: BTreeMap::new(),
    };
    ext.recount();
    ext
}

/// Keep the trees whose external call targets a labeled address.
pub fn filter_protocol_traces(trees: Vec<TraceTree>, ext: &ExtendedSeedSet) -> Vec<TraceTree> {
    trees
        .into_iter()
        .filter(|t| {
            t.root_target()
                .and_then(|v| v.address)
                .is_some_and(|a| ext.contains(&a))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_contract_registry, Status, TraceRecord, TraceType};
    use crate::types::TxHash;
    use proptest::prelude::*;

    fn addr(n: u64) -> Address {
        Address::from_low_u64(n)
    }

    fn seed(n: u64, protocol: &str) -> SeedEntry {
        SeedEntry {
            address: addr(n),
            protocol: protocol.into(),
            category: Category::Dex,
            label: format!("{protocol}-{n}"),
            origin: Origin::Seed,
        }
    }

    fn registry(links: &[(u64, u64)]) -> ContractRegistry {
        let rows = links.iter().enumerate().map(|(i, &(from, to))| TraceRecord {
            tx_hash: TxHash([0; 32]),
            block_number: i as u64,
            from_address: addr(from),
            to_address: Some(addr(to)),
            trace_address: vec![],
            trace_type: TraceType::Create,
            method_id: None,
            value: 0,
            status: Status::Success,
        });
        build_contract_registry(rows, None, &mut Diagnostics::new())
    }

    #[test]
    fn empty_seed_file() {
        let s = load_seeds("address,protocol,category,label\n".as_bytes(), &mut Diagnostics::new()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn same_protocol_duplicate_collapses() {
        let text = format!(
            "address,protocol,category,label\n{a},uniswap,dex,router\n{a},uniswap,dex,router\n",
            a = addr(1)
        );
        let mut d = Diagnostics::new();
        let s = load_seeds(text.as_bytes(), &mut d).unwrap();
        assert_eq!(s.len(), 1);
        assert!(d.is_empty());
    }

    #[test]
    fn conflicting_duplicate_reported() {
        let text = format!(
            "address,protocol,category,label\n{a},uniswap,dex,router\n{a},sushiswap,dex,router\n",
            a = addr(1)
        );
        let mut d = Diagnostics::new();
        let s = load_seeds(text.as_bytes(), &mut d).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(d.len(), 1);
        let msg = &d.items[0].message;
        assert!(msg.contains("uniswap") && msg.contains("sushiswap"), "{msg}");
    }

    #[test]
    fn two_step_closure() {
        let mut seeds = SeedSet::new();
        seeds.insert(seed(1, "uniswap")).unwrap();
        let ext = extend_seeds(
            &seeds,
            &registry(&[(1, 2), (2, 3)]),
            ExtensionMode::Closure,
            &mut Diagnostics::new(),
        );
        assert_eq!(ext.len(), 3);
        assert_eq!(ext.get(&addr(1)).unwrap().origin, Origin::Seed);
        for n in [2, 3] {
            let e = ext.get(&addr(n)).unwrap();
            assert_eq!(e.origin, Origin::Extended);
            assert_eq!(e.protocol, "uniswap");
        }
        assert_eq!(ext.counts()[&("uniswap".to_string(), Origin::Extended)], 2);
    }

    #[test]
    fn one_hop_stops_after_first_level() {
        let mut seeds = SeedSet::new();
        seeds.insert(seed(1, "uniswap")).unwrap();
        let ext = extend_seeds(
            &seeds,
            &registry(&[(1, 2), (2, 3)]),
            ExtensionMode::OneHop,
            &mut Diagnostics::new(),
        );
        assert_eq!(ext.len(), 2);
        assert!(!ext.contains(&addr(3)));
    }

    #[test]
    fn no_creations_is_identity() {
        let mut seeds = SeedSet::new();
        seeds.insert(seed(1, "uniswap")).unwrap();
        seeds.insert(seed(5, "aave")).unwrap();
        let ext = extend_seeds(
            &seeds,
            &ContractRegistry::new(),
            ExtensionMode::Closure,
            &mut Diagnostics::new(),
        );
        assert_eq!(ext.len(), 2);
        assert!(ext.iter().all(|e| e.origin == Origin::Seed));
    }

    #[test]
    fn cross_protocol_collision_reassigns_seed() {
        let mut seeds = SeedSet::new();
        seeds.insert(seed(1, "uniswap")).unwrap();
        seeds.insert(seed(2, "sushiswap")).unwrap();
        let mut d = Diagnostics::new();
        let ext = extend_seeds(&seeds, &registry(&[(1, 2), (2, 3)]), ExtensionMode::Closure, &mut d);
        let e2 = ext.get(&addr(2)).unwrap();
        assert_eq!((e2.protocol.as_str(), e2.origin), ("uniswap", Origin::Extended));
        assert_eq!(ext.protocol_of(&addr(3)), Some("uniswap"));
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn same_protocol_collision_keeps_seed() {
        let mut seeds = SeedSet::new();
        seeds.insert(seed(1, "uniswap")).unwrap();
        seeds.insert(seed(2, "uniswap")).unwrap();
        let mut d = Diagnostics::new();
        let ext = extend_seeds(&seeds, &registry(&[(1, 2), (2, 3)]), ExtensionMode::Closure, &mut d);
        assert_eq!(ext.get(&addr(2)).unwrap().origin, Origin::Seed);
        assert_eq!(ext.get(&addr(3)).unwrap().label, "uniswap-2");
        assert!(d.is_empty());
    }

    #[test]
    fn filter_keeps_labeled_roots() {
        use crate::ingest::assemble_trace_trees;
        let rec = |tx: u8, to: u64| TraceRecord {
            tx_hash: TxHash([tx; 32]),
            block_number: 1,
            from_address: addr(999),
            to_address: Some(addr(to)),
            trace_address: vec![],
            trace_type: TraceType::Call,
            method_id: None,
            value: 0,
            status: Status::Success,
        };
        let trees = assemble_trace_trees(vec![rec(1, 1), rec(2, 50)], &mut Diagnostics::new());
        let ext = ExtendedSeedSet::from_entries([seed(1, "uniswap")]);
        let kept = filter_protocol_traces(trees, &ext);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].tx_hash, TxHash([1; 32]));
    }

    // Random creation forests: node i > 0 gets a creator among 0..i (or none).
    fn forest() -> impl Strategy<Value = (Vec<Option<usize>>, Vec<usize>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::option::weighted(0.8, any::<prop::sample::Index>()), n),
                prop::collection::vec(any::<prop::sample::Index>(), 1..6),
            )
                .prop_map(move |(parents, seeds)| {
                    let parents = parents
                        .into_iter()
                        .enumerate()
                        .map(|(i, p)| if i == 0 { None } else { p.map(|ix| ix.index(i)) })
                        .collect();
                    let seeds = seeds.into_iter().map(|s| s.index(n)).collect();
                    (parents, seeds)
                })
        })
    }

    proptest! {
        #[test]
        fn closure_matches_brute_force_reachability((parents, seed_ix) in forest()) {
            let links: Vec<(u64, u64)> = parents
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.map(|p| (p as u64, i as u64)))
                .collect();
            let reg = registry(&links);
            let mut seeds = SeedSet::new();
            for &s in &seed_ix {
                seeds.insert(seed(s as u64, "p")).unwrap();
            }
            let ext = extend_seeds(&seeds, &reg, ExtensionMode::Closure, &mut Diagnostics::new());
            for i in 0..parents.len() {
                // brute force: walk up the creator chain looking for a seed
                let mut cur = Some(i);
                let mut reached = false;
                while let Some(c) = cur {
                    if seed_ix.contains(&c) { reached = true; break; }
                    cur = parents[c];
                }
                prop_assert_eq!(ext.contains(&addr(i as u64)), reached, "node {}", i);
            }
            for s in &seed_ix {
                prop_assert_eq!(ext.get(&addr(*s as u64)).unwrap().origin, Origin::Seed);
            }
        }

        #[test]
        fn extended_entries_inherit_from_an_ancestor_seed((parents, seed_ix) in forest()) {
            let links: Vec<(u64, u64)> = parents
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.map(|p| (p as u64, i as u64)))
                .collect();
            let reg = registry(&links);
            let mut seeds = SeedSet::new();
            for (k, &s) in seed_ix.iter().enumerate() {
                let _ = seeds.insert(seed(s as u64, &format!("p{}", k % 3)));
            }
            let ext = extend_seeds(&seeds, &reg, ExtensionMode::Closure, &mut Diagnostics::new());
            for e in ext.iter().filter(|e| e.origin == Origin::Extended) {
                let mut cur = reg.creator(&e.address);
                let mut found = false;
                while let Some(c) = cur {
                    if let Some(up) = ext.get(&c) {
                        if up.origin == Origin::Seed {
                            prop_assert_eq!(&up.protocol, &e.protocol);
                            found = true;
                            break;
                        }
                    }
                    cur = reg.creator(&c);
                }
                prop_assert!(found);
            }
        }
    }
}
