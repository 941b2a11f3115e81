use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use defi_compose::community::{Algorithm, NmiNorm};
use defi_compose::error::Error;
use defi_compose::ingest::TraceFormat;
use defi_compose::pipeline::{explain_block, run, RunConfig, Stage};

#[derive(Parser)]
#[command(
    name = "defi-compose",
    version,
    about = "DeFi composability analysis over transaction traces"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured stage in order.
    Run(StageArgs),
    Ingest(StageArgs),
    ExtendSeeds(StageArgs),
    BuildNetworks(StageArgs),
    Topology(StageArgs),
    Communities(StageArgs),
    ExtractBlocks(StageArgs),
    Report(StageArgs),
    /// Print the structure of one stored block.
    ExplainBlock {
        hash: String,
        /// Block store written by extract-blocks.
        #[arg(long, default_value = "out/extract-blocks/block_store.jsonl")]
        store: PathBuf,
    },
}

#[derive(Args)]
struct StageArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    trace_format: Option<TraceFormat>,
    #[arg(long)]
    creations: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<PathBuf>,
    #[arg(long)]
    erc20: Option<PathBuf>,
    #[arg(long)]
    erc20_bytecode: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates for the power-law goodness of fit.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    include_failed_traces: bool,
    #[arg(long)]
    one_hop_extension: bool,
    #[arg(long)]
    nmi_variant: Option<NmiNorm>,
    /// Comma-separated community algorithms.
    #[arg(long, value_delimiter = ',')]
    algorithms: Vec<Algorithm>,
    /// Re-run even when the stage manifest is current.
    #[arg(long)]
    force: bool,
}

impl StageArgs {
    fn into_config(self, stages: Vec<Stage>) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_toml_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v.into(); })*};
        }
        set!(traces, creations, seeds, erc20, erc20_bytecode);
        set!(trace_format, out_dir, seed, bootstrap, nmi_variant);
        cfg.include_failed_traces |= self.include_failed_traces;
        cfg.one_hop_extension |= self.one_hop_extension;
        cfg.force |= self.force;
        if !self.algorithms.is_empty() {
            cfg.algorithms = self.algorithms;
        }
        if !stages.is_empty() {
            cfg.stages = stages;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    let (args, stages) = match command {
        Command::ExplainBlock { hash, store } => {
            print!("{}", explain_block(&hash, &store)?);
            return Ok(());
        }
        Command::Run(a) => (a, vec![]),
        Command::Ingest(a) => (a, vec![Stage::Ingest]),
        Command::ExtendSeeds(a) => (a, vec![Stage::ExtendSeeds]),
        Command::BuildNetworks(a) => (a, vec![Stage::BuildNetworks]),
        Command::Topology(a) => (a, vec![Stage::Topology]),
        Command::Communities(a) => (a, vec![Stage::Communities]),
        Command::ExtractBlocks(a) => (a, vec![Stage::ExtractBlocks]),
        Command::Report(a) => (a, vec![Stage::Report]),
    };
    let cfg = args.into_config(stages)?;
    for outcome in run(&cfg)? {
        let state = if outcome.skipped { "up to date" } else { "done" };
        println!("{}: {state} ({})", outcome.stage, outcome.dir.display());
    }
    Ok(())
}
