use std::io::IsTerminal;
use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cnnslicer_service::{run, ServiceConfig, DEFAULT_CACHE_MB, DEFAULT_PORT};

/// Serve analyses of the runs under a data root over HTTP.
#[derive(Debug, Parser)]
#[command(name = "cnnslicer-service", version)]
struct Args {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "CNNSLICER_DATA_ROOT")]
    data_root: PathBuf,
    /// Response cache budget in MiB.
    #[arg(long, default_value_t = DEFAULT_CACHE_MB)]
    cache_mb: usize,
    /// Worker threads; 0 = one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Origin allowed to call the API from a browser (repeatable, `*` for any).
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let args = Args::parse();
    let config = ServiceConfig {
        host: args.host,
        port: args.port,
        data_root: args.data_root,
        cache_mb: args.cache_mb,
        threads: args.threads,
        cors_origins: args.cors_origins,
    };
    match run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e}");
            ExitCode::from(2)
        }
    }
}
