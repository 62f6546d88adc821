use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use parkbarrier::cloud::eventlog::{read_log, FileLog};
use parkbarrier::cloud::http::{serve, shared};
use parkbarrier::cloud::{CloudConfig, CloudService};

#[derive(Parser)]
#[command(name = "parkbarrier-cloud", about = "Parking business service with an HTTP JSON API")]
struct Cli {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Append-only event log, replayed at startup.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rebuild state from the log, print it and exit.
    #[arg(long, requires = "log")]
    replay_only: bool,
    /// Wall-clock sweep period in ms; 0 disables it (clients then POST /api/v1/sweep).
    #[arg(long, default_value_t = 5_000)]
    sweep_ms: u64,
}

fn run(cli: Cli) -> Result<(), String> {
    let config = match &cli.config {
        Some(p) => CloudConfig::load(p).map_err(|e| e.to_string())?,
        None => CloudConfig::default(),
    };
    let entries = match &cli.log {
        Some(p) => read_log(p).map_err(|e| e.to_string())?,
        None => Vec::new(),
    };
    if cli.replay_only {
        let svc = CloudService::recover(config, &entries, None);
        let state = serde_json::to_string_pretty(svc.state()).map_err(|e| e.to_string())?;
        println!("{state}");
        return Ok(());
    }
    let log = match &cli.log {
        Some(p) => Some(Box::new(FileLog::open(p).map_err(|e| e.to_string())?) as _),
        None => None,
    };
    let svc = CloudService::recover(config, &entries, log);
    log::info!("replayed {} log entries", entries.len());
    let sweep = (cli.sweep_ms > 0).then(|| Duration::from_millis(cli.sweep_ms));
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(cli.listen).await.map_err(|e| e.to_string())?;
        log::info!("listening on {}", cli.listen);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, shared(svc), sweep, shutdown).await.map_err(|e| e.to_string())
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
