//! Staged batch runs with per-stage manifests.
//!
//! Every stage reads its inputs, writes plain-text dumps into
//! `<out_dir>/<stage>/` and finishes with a `manifest.json` recording input
//! digests, parameters, the derived seed and output digests. A stage whose
//! manifest still matches its inputs is skipped.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::blocks::{extract_all, BlockStore, TxBlocks};
use crate::community::{
    detect_communities, evaluate_partition, prepare_community_graph, write_evaluation_table, Algorithm, NmiNorm,
};
use crate::error::{Diagnostics, Error, Result};
use crate::ground_truth::{extend_seeds, filter_protocol_traces, load_seeds, ExtendedSeedSet, ExtensionMode};
use crate::ingest::{
    assemble_trace_trees, build_contract_registry, erc20_from_bytecode, parse_traces, read_address_set, write_traces,
    ContractRegistry, TraceFormat, TraceTree,
};
use crate::network::{build_ca_network, build_protocol_network, graph_summary, WeightedDiGraph};
use crate::reports::{
    build_composition_matrix, counts_from_store, treemap, tx_compositions, write_block_counts, write_treemap,
};
use crate::topology::{
    bootstrap_gof, ccdf_rows, compare_distributions, component_protocol_matrix, connected_components, degree_sequence,
    fit_power_law, ComponentMode, DegreeMode, DEFAULT_BOOTSTRAP,
};
use crate::types::BlockHash;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
const TOP_COMPONENTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    ExtendSeeds,
    BuildNetworks,
    Topology,
    Communities,
    ExtractBlocks,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::ExtendSeeds,
        Stage::BuildNetworks,
        Stage::Topology,
        Stage::Communities,
        Stage::ExtractBlocks,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::ExtendSeeds => "extend-seeds",
            Stage::BuildNetworks => "build-networks",
            Stage::Topology => "topology",
            Stage::Communities => "communities",
            Stage::ExtractBlocks => "extract-blocks",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_seed() -> u64 {
    2021
}

fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP
}

fn default_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub traces: Option<PathBuf>,
    #[serde(default)]
    pub trace_format: TraceFormat,
    pub creations: Option<PathBuf>,
    pub seeds: Option<PathBuf>,
    /// One ERC20 address per line.
    pub erc20: Option<PathBuf>,
    /// `address,bytecode` rows scanned for the ERC20 selectors.
    pub erc20_bytecode: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_stages")]
    pub stages: Vec<Stage>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub include_failed_traces: bool,
    #[serde(default)]
    pub one_hop_extension: bool,
    #[serde(default)]
    pub nmi_variant: NmiNorm,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Re-run stages even when their manifest matches.
    #[serde(default)]
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            traces: None,
            trace_format: TraceFormat::default(),
            creations: None,
            seeds: None,
            erc20: None,
            erc20_bytecode: None,
            out_dir: default_out_dir(),
            stages: default_stages(),
            seed: default_seed(),
            bootstrap: default_bootstrap(),
            include_failed_traces: false,
            one_hop_extension: false,
            nmi_variant: NmiNorm::default(),
            algorithms: default_algorithms(),
            force: false,
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative paths resolve against its directory.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.traces,
            &mut cfg.creations,
            &mut cfg.seeds,
            &mut cfg.erc20,
            &mut cfg.erc20_bytecode,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    fn extension_mode(&self) -> ExtensionMode {
        if self.one_hop_extension {
            ExtensionMode::OneHop
        } else {
            ExtensionMode::Closure
        }
    }

    fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out_dir.join(stage.name())
    }

    fn required(&self, stage: Stage, field: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let p = value
            .clone()
            .ok_or_else(|| Error::Invalid(format!("stage {stage}: no {field} input configured")))?;
        if !p.exists() {
            return Err(Error::Invalid(format!(
                "stage {stage}: {field} input {} does not exist",
                p.display()
            )));
        }
        Ok(p)
    }
}

/// Stage seed: the first eight bytes of SHA-256 over the master seed and
/// the stage name.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub version: String,
    pub master_seed: u64,
    pub seed: u64,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    fn same_run(&self, other: &Manifest) -> bool {
        self.stage == other.stage
            && self.version == other.version
            && self.master_seed == other.master_seed
            && self.seed == other.seed
            && self.parameters == other.parameters
            && self.inputs == other.inputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub skipped: bool,
    pub dir: PathBuf,
}

/// Writes the stage's dumps into a directory and tracks them for the manifest.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(self.dir.join(name), e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n").map_err(|e| Error::io(name, e))
        })
    }

    fn diagnostics(&mut self, diags: &Diagnostics) -> Result<()> {
        self.write_with("diagnostics.txt", |w| {
            for d in diags.iter() {
                let line = match d.line {
                    Some(l) => format!("line {l}: {}\n", d.message),
                    None => format!("{}\n", d.message),
                };
                w.write_all(line.as_bytes())
                    .map_err(|e| Error::io("diagnostics.txt", e))?;
            }
            Ok(())
        })
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

struct Inputs<'a> {
    config: &'a RunConfig,
    stage: Stage,
    files: Vec<(String, PathBuf)>,
}

impl<'a> Inputs<'a> {
    fn new(config: &'a RunConfig, stage: Stage) -> Self {
        Inputs {
            config,
            stage,
            files: Vec::new(),
        }
    }

    fn external(&mut self, path: PathBuf) -> PathBuf {
        self.files.push((path.display().to_string(), path.clone()));
        path
    }

    fn upstream(&mut self, stage: Stage, name: &str) -> Result<PathBuf> {
        let path = self.config.stage_dir(stage).join(name);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: self.stage.name().to_string(),
                path,
            });
        }
        self.files.push((format!("{}/{name}", stage.name()), path.clone()));
        Ok(path)
    }

    fn digests(&self) -> Result<Vec<FileDigest>> {
        self.files
            .iter()
            .map(|(label, path)| {
                Ok(FileDigest {
                    path: label.clone(),
                    sha256: file_digest(path)?,
                })
            })
            .collect()
    }
}

fn load_registry(path: &Path) -> Result<ContractRegistry> {
    ContractRegistry::read_csv(open(path)?)
}

fn load_ext(path: &Path) -> Result<ExtendedSeedSet> {
    ExtendedSeedSet::read_csv(open(path)?)
}

fn load_trees(path: &Path, diags: &mut Diagnostics) -> Result<Vec<TraceTree>> {
    let records = parse_traces(open(path)?, TraceFormat::Csv, diags)?;
    Ok(assemble_trace_trees(records, diags))
}

fn load_graph(nodes: &Path, edges: &Path) -> Result<WeightedDiGraph> {
    WeightedDiGraph::read(open(nodes)?, open(edges)?)
}

/// Runs the configured stages in dependency order.
pub fn run(config: &RunConfig) -> Result<Vec<StageOutcome>> {
    let mut stages = config.stages.clone();
    stages.sort();
    stages.dedup();
    stages.into_iter().map(|s| run_stage(config, s)).collect()
}

pub fn run_stage(config: &RunConfig, stage: Stage) -> Result<StageOutcome> {
    let dir = config.stage_dir(stage);
    let seed = derive_seed(config.seed, stage.name());
    let mut inputs = Inputs::new(config, stage);
    let parameters = declare_inputs(config, stage, &mut inputs)?;
    let planned = Manifest {
        stage,
        version: VERSION.to_string(),
        master_seed: config.seed,
        seed,
        parameters,
        inputs: inputs.digests()?,
        outputs: Vec::new(),
    };

    let manifest_path = dir.join(MANIFEST);
    if !config.force && manifest_path.exists() {
        let previous: Manifest = serde_json::from_reader(open(&manifest_path)?)?;
        if previous.same_run(&planned) && outputs_intact(&dir, &previous)? {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome {
                stage,
                skipped: true,
                dir,
            });
        }
    }

    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = Outputs {
        dir: dir.clone(),
        files: Vec::new(),
    };
    let files: Vec<PathBuf> = inputs.files.iter().map(|(_, p)| p.clone()).collect();
    log::info!("{stage}: running");
    execute(config, stage, seed, &files, &mut out)?;

    let mut manifest = planned;
    manifest.outputs = out
        .files
        .iter()
        .map(|name| {
            Ok(FileDigest {
                path: name.clone(),
                sha256: file_digest(&dir.join(name))?,
            })
        })
        .collect::<Result<_>>()?;
    let mut w = BufWriter::new(File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").map_err(|e| Error::io(&manifest_path, e))?;
    w.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(StageOutcome {
        stage,
        skipped: false,
        dir,
    })
}

fn outputs_intact(dir: &Path, m: &Manifest) -> Result<bool> {
    for o in &m.outputs {
        let p = dir.join(&o.path);
        if !p.exists() || file_digest(&p)? != o.sha256 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Registers the stage's inputs in a fixed order and returns the parameters
/// that influence its outputs.
fn declare_inputs(
    config: &RunConfig,
    stage: Stage,
    inputs: &mut Inputs<'_>,
) -> Result<BTreeMap<String, serde_json::Value>> {
    let mut params = BTreeMap::new();
    match stage {
        Stage::Ingest => {
            inputs.external(config.required(stage, "traces", &config.traces)?);
            inputs.external(config.required(stage, "creations", &config.creations)?);
            if config.erc20.is_some() {
                inputs.external(config.required(stage, "erc20", &config.erc20)?);
            }
            if config.erc20_bytecode.is_some() {
                inputs.external(config.required(stage, "erc20_bytecode", &config.erc20_bytecode)?);
            }
            params.insert("trace_format".into(), json!(config.trace_format));
            params.insert("erc20_list".into(), json!(config.erc20.is_some()));
            params.insert("erc20_bytecode".into(), json!(config.erc20_bytecode.is_some()));
        }
        Stage::ExtendSeeds => {
            inputs.external(config.required(stage, "seeds", &config.seeds)?);
            inputs.upstream(Stage::Ingest, "registry.csv")?;
            params.insert("extension".into(), json!(config.extension_mode()));
        }
        Stage::BuildNetworks | Stage::ExtractBlocks => {
            inputs.upstream(Stage::Ingest, "traces.csv")?;
            inputs.upstream(Stage::Ingest, "registry.csv")?;
            inputs.upstream(Stage::ExtendSeeds, "extended_seeds.csv")?;
            params.insert("include_failed_traces".into(), json!(config.include_failed_traces));
        }
        Stage::Topology => {
            inputs.upstream(Stage::BuildNetworks, "ca_nodes.csv")?;
            inputs.upstream(Stage::BuildNetworks, "ca_edges.csv")?;
            inputs.upstream(Stage::BuildNetworks, "protocol_nodes.csv")?;
            inputs.upstream(Stage::BuildNetworks, "protocol_edges.csv")?;
            inputs.upstream(Stage::ExtendSeeds, "extended_seeds.csv")?;
            params.insert("bootstrap".into(), json!(config.bootstrap));
        }
        Stage::Communities => {
            inputs.upstream(Stage::BuildNetworks, "ca_nodes.csv")?;
            inputs.upstream(Stage::BuildNetworks, "ca_edges.csv")?;
            inputs.upstream(Stage::ExtendSeeds, "extended_seeds.csv")?;
            params.insert("algorithms".into(), json!(config.algorithms));
            params.insert("nmi_variant".into(), json!(config.nmi_variant));
        }
        Stage::Report => {
            inputs.upstream(Stage::ExtractBlocks, "block_store.jsonl")?;
            inputs.upstream(Stage::ExtractBlocks, "tx_blocks.jsonl")?;
            inputs.upstream(Stage::ExtendSeeds, "extended_seeds.csv")?;
        }
    }
    Ok(params)
}

fn execute(config: &RunConfig, stage: Stage, seed: u64, files: &[PathBuf], out: &mut Outputs) -> Result<()> {
    let mut diags = Diagnostics::default();
    match stage {
        Stage::Ingest => {
            let records = parse_traces(open(&files[0])?, config.trace_format, &mut diags)?;
            let creations = parse_traces(open(&files[1])?, config.trace_format, &mut diags)?;
            let mut erc20 = std::collections::HashSet::new();
            let mut next = 2;
            if config.erc20.is_some() {
                erc20.extend(read_address_set(open(&files[next])?)?);
                next += 1;
            }
            if config.erc20_bytecode.is_some() {
                erc20.extend(erc20_from_bytecode(open(&files[next])?)?);
            }
            let registry = build_contract_registry(creations, Some(&erc20), &mut diags);
            let trees = assemble_trace_trees(records.clone(), &mut diags);
            out.write_with("traces.csv", |w| write_traces(w, &records))?;
            out.write_with("registry.csv", |w| registry.write_csv(w))?;
            out.json(
                "summary.json",
                &json!({
                    "records": records.len(),
                    "transactions": trees.len(),
                    "contracts": registry.len(),
                    "erc20": registry.iter().filter(|(_, i)| i.is_erc20).count(),
                }),
            )?;
        }
        Stage::ExtendSeeds => {
            let seeds = load_seeds(open(&files[0])?, &mut diags)?;
            let registry = load_registry(&files[1])?;
            let ext = extend_seeds(&seeds, &registry, config.extension_mode(), &mut diags);
            out.write_with("extended_seeds.csv", |w| ext.write_csv(w))?;
            out.write_with("category_totals.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["category", "seed", "total"])?;
                let totals = ext.category_totals();
                for (cat, (s, t)) in &totals {
                    c.write_record([cat.as_str().to_string(), s.to_string(), t.to_string()])?;
                }
                let (s, t) = totals.values().fold((0, 0), |a, v| (a.0 + v.0, a.1 + v.1));
                c.write_record(["total".to_string(), s.to_string(), t.to_string()])?;
                c.flush().map_err(|e| Error::io("category_totals.csv", e))
            })?;
            out.write_with("protocol_counts.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["protocol", "origin", "count"])?;
                for ((p, o), n) in ext.counts() {
                    c.write_record([p.clone(), o.as_str().to_string(), n.to_string()])?;
                }
                c.flush().map_err(|e| Error::io("protocol_counts.csv", e))
            })?;
        }
        Stage::BuildNetworks => {
            let trees = load_trees(&files[0], &mut diags)?;
            let registry = load_registry(&files[1])?;
            let ext = load_ext(&files[2])?;
            let trees = filter_protocol_traces(trees, &ext);
            let ca = build_ca_network(&trees, &registry, &ext, config.include_failed_traces);
            let proto = build_protocol_network(&ca, &ext);
            out.write_with("ca_nodes.csv", |w| ca.write_nodes(w))?;
            out.write_with("ca_edges.csv", |w| ca.write_edges(w))?;
            out.write_with("protocol_nodes.csv", |w| proto.write_nodes(w))?;
            out.write_with("protocol_edges.csv", |w| proto.write_edges(w))?;
            let rows = [
                ("ca", graph_summary(&ca, &mut diags), ca.total_weight()),
                ("protocol", graph_summary(&proto, &mut diags), proto.total_weight()),
            ];
            out.write_with("summary.csv", |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record([
                    "network",
                    "transactions",
                    "nodes",
                    "edges",
                    "self_loops",
                    "total_weight",
                    "average_degree",
                    "density",
                ])?;
                for (name, s, weight) in &rows {
                    c.write_record([
                        name.to_string(),
                        trees.len().to_string(),
                        s.node_count.to_string(),
                        s.edge_count.to_string(),
                        s.self_loop_count.to_string(),
                        weight.to_string(),
                        format!("{:.6}", s.average_degree),
                        format!("{:.6e}", s.density),
                    ])?;
                }
                c.flush().map_err(|e| Error::io("summary.csv", e))
            })?;
        }
        Stage::Topology => {
            let ca = load_graph(&files[0], &files[1])?;
            let proto = load_graph(&files[2], &files[3])?;
            let ext = load_ext(&files[4])?;
            topology_stage(config, seed, &ca, &proto, &ext, out)?;
        }
        Stage::Communities => {
            let ca = load_graph(&files[0], &files[1])?;
            let ext = load_ext(&files[2])?;
            communities_stage(config, seed, &ca, &ext, out, &mut diags)?;
        }
        Stage::ExtractBlocks => {
            let trees = load_trees(&files[0], &mut diags)?;
            let registry = load_registry(&files[1])?;
            let ext = load_ext(&files[2])?;
            let trees = filter_protocol_traces(trees, &ext);
            let results = extract_all(&trees, &ext, &registry, config.include_failed_traces);
            let mut store = BlockStore::new();
            let mut txs = Vec::with_capacity(results.len());
            for (tx, blocks) in results {
                for b in blocks {
                    store.insert(b);
                }
                txs.push(tx);
            }
            out.write_with("block_store.jsonl", |w| store.write_jsonl(w))?;
            out.write_with("tx_blocks.jsonl", |w| TxBlocks::write_jsonl(w, &txs))?;
        }
        Stage::Report => {
            let store = BlockStore::read_jsonl(open(&files[0])?)?;
            let txs = TxBlocks::read_jsonl(open(&files[1])?)?;
            let ext = load_ext(&files[2])?;
            let counts = counts_from_store(&store);
            out.write_with("block_counts.csv", |w| write_block_counts(w, &counts))?;
            let comps = tx_compositions(&txs, &store, &mut diags)?;
            out.write_with("treemap.csv", |w| write_treemap(w, &treemap(&comps)))?;
            let matrix = build_composition_matrix(&ext.protocols(), &comps, &mut diags);
            out.write_with("composition_matrix.csv", |w| matrix.write_csv(w))?;
            out.write_with("composition_blocks_per_tx.csv", |w| matrix.write_blocks_per_tx_csv(w))?;
        }
    }
    out.diagnostics(&diags)
}

fn topology_stage(
    config: &RunConfig,
    seed: u64,
    ca: &WeightedDiGraph,
    proto: &WeightedDiGraph,
    ext: &ExtendedSeedSet,
    out: &mut Outputs,
) -> Result<()> {
    let networks = [("ca", ca), ("protocol", proto)];
    let mut fit_rows: Vec<Vec<String>> = Vec::new();
    let mut lr_rows: Vec<Vec<String>> = Vec::new();
    for (name, g) in networks {
        for mode in DegreeMode::ALL {
            let degrees = degree_sequence(g, mode);
            let fit = fit_power_law(&degrees);
            let label = format!("{name}_{}", mode.as_str());
            match &fit {
                Err(e) => {
                    fit_rows.push(vec![name.into(), mode.as_str().into(), format!("unavailable: {e}")]);
                }
                Ok(f) => {
                    let gof = bootstrap_gof(&degrees, f, config.bootstrap, derive_seed(seed, &label));
                    let p = match &gof {
                        Ok(g) => format!("{:.4}", g.p_value),
                        Err(e) => {
                            log::warn!("{label}: {e}");
                            String::new()
                        }
                    };
                    fit_rows.push(vec![
                        name.into(),
                        mode.as_str().into(),
                        "ok".into(),
                        f.k_min.to_string(),
                        format!("{:.4}", f.alpha),
                        format!("{:.6}", f.ks_distance),
                        f.n_tail.to_string(),
                        f.n_total.to_string(),
                        p,
                    ]);
                    for c in compare_distributions(&degrees, f) {
                        let mut row = vec![name.to_string(), mode.as_str().into(), c.alternative.to_string()];
                        match c.outcome {
                            Ok(s) => row.extend([
                                "ok".to_string(),
                                format!("{:.4}", s.ratio),
                                format!("{:.4}", s.normalized_ratio),
                                format!("{:.4}", s.p_value),
                            ]),
                            Err(e) => row.push(format!("unavailable: {e}")),
                        }
                        lr_rows.push(row);
                    }
                }
            }
            let rows = ccdf_rows(&degrees, fit.as_ref().ok());
            out.write_with(&format!("ccdf_{label}.csv"), |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["degree", "empirical", "fitted"])?;
                for (d, e, f) in rows {
                    c.write_record([
                        d.to_string(),
                        format!("{e:.6e}"),
                        f.map_or(String::new(), |f| format!("{f:.6e}")),
                    ])?;
                }
                c.flush().map_err(|e| Error::io("ccdf", e))
            })?;
        }
    }
    write_rows(
        out,
        "powerlaw.csv",
        &[
            "network",
            "degree",
            "status",
            "k_min",
            "alpha",
            "ks_distance",
            "n_tail",
            "n_total",
            "p_value",
        ],
        &fit_rows,
    )?;
    write_rows(
        out,
        "likelihood_ratios.csv",
        &[
            "network",
            "degree",
            "alternative",
            "status",
            "ratio",
            "normalized_ratio",
            "p_value",
        ],
        &lr_rows,
    )?;

    let mut comp_rows = Vec::new();
    for (name, g) in networks {
        for mode in [ComponentMode::Weak, ComponentMode::Strong] {
            let report = connected_components(g, mode);
            let mode_name = match mode {
                ComponentMode::Weak => "weak",
                ComponentMode::Strong => "strong",
            };
            let internal = report.internal_edge_counts(g);
            comp_rows.push(vec![
                name.to_string(),
                mode_name.to_string(),
                "all".to_string(),
                report.components.len().to_string(),
                String::new(),
            ]);
            for (i, c) in report.components.iter().take(TOP_COMPONENTS).enumerate() {
                comp_rows.push(vec![
                    name.to_string(),
                    mode_name.to_string(),
                    (i + 1).to_string(),
                    c.len().to_string(),
                    internal[i].to_string(),
                ]);
            }
            if name == "ca" {
                let m = component_protocol_matrix(&report, g, ext, TOP_COMPONENTS);
                out.write_with(&format!("component_matrix_{mode_name}.csv"), |w| m.write_csv(w))?;
            }
        }
    }
    write_rows(
        out,
        "components.csv",
        &["network", "mode", "rank", "nodes", "edges"],
        &comp_rows,
    )
}

fn write_rows(out: &mut Outputs, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    out.write_with(name, |w| {
        let mut c = csv::WriterBuilder::new().flexible(true).from_writer(w);
        c.write_record(header)?;
        for r in rows {
            c.write_record(r)?;
        }
        c.flush().map_err(|e| Error::io(name, e))
    })
}

fn communities_stage(
    config: &RunConfig,
    seed: u64,
    ca: &WeightedDiGraph,
    ext: &ExtendedSeedSet,
    out: &mut Outputs,
    diags: &mut Diagnostics,
) -> Result<()> {
    let graph = match prepare_community_graph(ca) {
        Ok(g) => Some(g),
        Err(e) => {
            diags.push(format!("community detection skipped: {e}"));
            None
        }
    };
    let mut rows = Vec::new();
    if let Some(g) = &graph {
        let runs: Vec<_> = config
            .algorithms
            .par_iter()
            .map(|&alg| {
                let p = detect_communities(g, alg, derive_seed(seed, alg.as_str()));
                let report = evaluate_partition(g, &p, ext, config.nmi_variant).map_err(|e| e.to_string());
                (alg, p, report)
            })
            .collect();
        for (alg, p, report) in runs {
            out.write_with(&format!("partition_{}.csv", alg.as_str()), |w| {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(["node", "community"])?;
                for (id, comm) in g.nodes().iter().zip(&p.assignment) {
                    c.write_record([id.to_string(), comm.to_string()])?;
                }
                c.flush().map_err(|e| Error::io("partition", e))
            })?;
            rows.push((alg, report));
        }
    } else {
        rows.extend(config.algorithms.iter().map(|&a| (a, Err("empty graph".to_string()))));
    }
    out.write_with("communities.csv", |w| write_evaluation_table(w, &rows))?;
    out.json(
        "prepared_graph.json",
        &json!({
            "nodes": graph.as_ref().map_or(0, |g| g.node_count()),
            "edges": graph.as_ref().map_or(0, |g| g.edge_count()),
            "outside_largest_component": ca.node_count() - graph.as_ref().map_or(0, |g| g.node_count()),
        }),
    )
}

/// Human-readable description of one stored block.
pub fn explain_block(hash: &str, store_path: &Path) -> Result<String> {
    let store = BlockStore::read_jsonl(open(store_path)?)?;
    let h: BlockHash = hash.trim().parse().map_err(|_| Error::UnknownHash(hash.to_string()))?;
    let stored = store.get(&h).ok_or_else(|| Error::UnknownHash(hash.to_string()))?;
    let b = &stored.block;
    let mut depth = vec![0usize; b.vertex_labels.len()];
    for &(p, c) in &b.edges {
        depth[c as usize] = depth[p as usize] + 1;
    }
    let mut s = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(s, "block {}", b.hash);
    let _ = writeln!(s, "root protocol: {}", b.root_protocol);
    let _ = writeln!(
        s,
        "root method: {}",
        b.root_method_id.map_or("none".to_string(), |m| m.to_hex())
    );
    let _ = writeln!(s, "occurrences: {}", stored.occurrence_count);
    let _ = writeln!(s, "vertices (label, outdegree, method):");
    for (i, label) in b.vertex_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            "  {}{}  out={}  method={}",
            "  ".repeat(depth[i]),
            label,
            b.outdegrees[i],
            b.method_ids[i].map_or("none".to_string(), |m| m.to_hex())
        );
    }
    let _ = writeln!(s, "child hashes: {}", b.child_hashes.len());
    for c in &b.child_hashes {
        let _ = writeln!(s, "  {c}");
    }
    Ok(s)
}
