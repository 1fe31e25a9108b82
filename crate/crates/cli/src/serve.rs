use std::io::Write;
use std::path::PathBuf;

use anyhow::anyhow;
use clap::Args;
use tapseg_service::{serve, AppState};

use crate::{load_config, Classify, CmdResult, Failure};

#[derive(Args)]
pub struct ServeArgs {
    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// `host:port`; overrides the environment and `service.bind`.
    #[arg(long)]
    pub bind: Option<String>,

    /// Overrides `service.results_dir`.
    #[arg(long)]
    pub results_dir: Option<PathBuf>,
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

pub fn cmd_serve(args: ServeArgs, seed: Option<u64>) -> CmdResult {
    let mut config = load_config(args.config.as_deref(), seed)?;
    config.validate()?;
    if let Some(dir) = args.results_dir {
        config.service.results_dir = dir;
    }
    let addr = args.bind.unwrap_or_else(|| config.service.bind_addr());
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().runtime()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::Usage(anyhow!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().runtime()?;
        println!("listening on http://{local}");
        let _ = std::io::stdout().flush();
        serve(listener, AppState::with_seed(config.service, seed), shutdown_signal())
            .await
            .runtime()
    })
}
