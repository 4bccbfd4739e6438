use std::net::SocketAddr;

use batchrender_server::{serve, AppState, WorkerMode};
use clap::Parser;

#[derive(Parser)]
#[command(version, about = "Batched rendering service")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,

    /// Run bench worker shards inside the server instead of child processes.
    #[arg(long)]
    in_process_workers: bool,

    /// Internal: run as a bench worker (task on stdin, report on stdout).
    #[arg(long, hide = true)]
    worker: bool,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    if args.worker {
        std::process::exit(batchrender::bench::worker_main());
    }
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let workers = if args.in_process_workers {
        WorkerMode::InProcess
    } else {
        WorkerMode::Process {
            program: std::env::current_exe()?,
            args: vec!["--worker".into()],
        }
    };
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve(listener, AppState::new(workers), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
