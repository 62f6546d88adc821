use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use parkbarrier::cloud::eventlog::FileLog;
use parkbarrier::cloud::{CloudConfig, CloudService};
use parkbarrier::config::NodeConfig;
use parkbarrier::fusion::FusionMode;
use parkbarrier::sim::{self, CloudEndpoint, EmbeddedCloud, HttpCloud, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "sim", about = "Deterministic parking-barrier scenario simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the metrics report.
    Run(RunArgs),
    /// Parse and check a scenario file.
    Validate { scenario: PathBuf },
    /// Print a generated load scenario.
    Generate {
        #[arg(long, default_value_t = 50)]
        spaces: usize,
        #[arg(long, default_value_t = 3_600_000)]
        duration: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Base URL of a running cloud service.
    #[arg(long, conflicts_with = "embedded")]
    cloud: Option<String>,
    /// Use an in-process cloud service (the default).
    #[arg(long)]
    embedded: bool,
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Force every space into one fusion mode.
    #[arg(long)]
    mode: Option<FusionMode>,
    #[arg(long)]
    node_config: Option<PathBuf>,
    /// Embedded cloud configuration.
    #[arg(long, requires = "embedded")]
    cloud_config: Option<PathBuf>,
    /// Embedded cloud event log.
    #[arg(long)]
    event_log: Option<PathBuf>,
}

fn load_scenario(path: &Path) -> Result<Scenario, String> {
    Scenario::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(args: RunArgs) -> Result<(), String> {
    let scenario = load_scenario(&args.scenario)?;
    let node = match &args.node_config {
        Some(p) => NodeConfig::load(p).map_err(|e| e.to_string())?,
        None => NodeConfig::default(),
    };
    let opts = RunOptions { seed: args.seed, mode: args.mode, node, ..RunOptions::default() };
    let mut cloud: Box<dyn CloudEndpoint> = match &args.cloud {
        Some(url) => Box::new(HttpCloud::connect(url, Duration::from_secs(10)).map_err(|e| e.to_string())?),
        None => {
            let cfg = match &args.cloud_config {
                Some(p) => CloudConfig::load(p).map_err(|e| e.to_string())?,
                None => CloudConfig::default(),
            };
            let mut svc = CloudService::new(cfg);
            if let Some(p) = &args.event_log {
                svc = svc.with_log(Box::new(FileLog::open(p).map_err(|e| e.to_string())?));
            }
            Box::new(EmbeddedCloud::new(svc))
        }
    };
    let out = sim::run(&scenario, &opts, cloud.as_mut()).map_err(|e| e.to_string())?;
    let json = out.report.to_json_pretty();
    match &args.metrics_out {
        Some(p) => std::fs::write(p, json).map_err(|e| format!("{}: {e}", p.display()))?,
        None => print!("{json}"),
    }
    if !out.report.messages.conserved() {
        log::warn!("message counters do not balance: {:?}", out.report.messages);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { scenario } => load_scenario(&scenario).map(|s| {
            println!("ok: {} spaces, {} events, {} ms", s.spaces.len(), s.events.len(), s.duration_ms);
        }),
        Command::Generate { spaces, duration, seed } => {
            print!("{}", sim::load_fixture(seed, spaces, duration));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
