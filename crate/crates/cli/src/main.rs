//! `bench`: runs one benchmark stage and writes a report.
//!
//! Exit codes: 0 ok, 1 failure or counter-law violation, 2 bad arguments,
//! 3 backend unavailable.

use std::path::PathBuf;
use std::process::ExitCode;

use batchrender::bench::{emit_report, format_report, worker_main, ProcessLauncher};
use batchrender::{BackendKind, BenchConfig, BenchReport, Error, ReportFormat, Stage};
use batchrender_client::{Client, ClientError};
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "bench", version, about = "Batched rendering throughput benchmark")]
struct Args {
    /// naive, tiled, readback, instanced or workers.
    #[arg(long, value_parser = parse::<Stage>)]
    stage: Option<Stage>,
    #[arg(long, default_value_t = 64)]
    scenes: usize,
    #[arg(long, default_value_t = 64)]
    width: u32,
    #[arg(long, default_value_t = 64)]
    height: u32,
    /// Timed steps.
    #[arg(long, default_value_t = 100)]
    frames: usize,
    /// soft or gpu.
    #[arg(long, default_value = "soft", value_parser = parse_backend)]
    backend: BackendKind,
    /// Worker processes (workers stage only).
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long, default_value = "json", value_parser = parse::<ReportFormat>)]
    format: ReportFormat,
    /// Run on a service at this base URL instead of locally.
    #[arg(long)]
    server: Option<String>,
    #[arg(long, hide = true)]
    worker: bool,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    match s {
        "soft" => Ok(BackendKind::Soft),
        "gpu" => Ok(BackendKind::Gpu),
        _ => Err(format!("unknown backend {s:?}, expected soft or gpu")),
    }
}

enum Failure {
    Usage(String),
    Unavailable(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BackendUnavailable(_) | Error::DeviceResidentUnsupported => Failure::Unavailable(e.to_string()),
            Error::Io { .. } | Error::Worker { .. } => Failure::Other(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match &e {
            ClientError::Api { kind, .. } if kind == "backend_unavailable" => Failure::Unavailable(e.to_string()),
            ClientError::Api { status: 400, .. } => Failure::Usage(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn run(args: Args) -> Result<BenchReport, Failure> {
    let stage = args
        .stage
        .ok_or_else(|| Failure::Usage("--stage is required".into()))?;
    let config = BenchConfig {
        stage,
        scenes: args.scenes,
        width: args.width,
        height: args.height,
        frames: args.frames,
        backend: args.backend,
        workers: args.workers,
        seed: args.seed,
        warmup: args.warmup,
    };
    config.validate()?;
    let report = match &args.server {
        Some(url) => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Other(e.to_string()))?;
            rt.block_on(Client::new(url.as_str()).bench(&config))?
        }
        None => {
            let exe = std::env::current_exe().map_err(|e| Failure::Other(e.to_string()))?;
            batchrender::run_benchmark(&config, &ProcessLauncher::new(exe, ["--worker"]))?
        }
    };
    match &args.out {
        Some(path) => emit_report(&report, path, args.format)?,
        None => {
            let text = format_report(&report, args.format);
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.worker {
        return ExitCode::from(worker_main() as u8);
    }
    match run(args) {
        Ok(report) if report.counter_laws_ok => ExitCode::SUCCESS,
        Ok(report) => {
            for v in &report.counter_law_violations {
                eprintln!("counter law violated: {v}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Unavailable(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
