//! `tapseg`: run, evaluate, benchmark, fine-tune and serve the point-tracking
//! segmentation pipeline from one experiment config.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod bench;
mod eval;
mod finetune;
mod manifest;
mod overlay;
mod run;
mod serve;
mod synth;

use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tapseg_core::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "tapseg", version, about = "Video object segmentation by tracking query points")]
struct Cli {
    /// Print the default configuration document and exit.
    #[arg(long)]
    print_schema: bool,

    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a video offline.
    Run(run::RunArgs),
    /// Score a run's masks against a labeled dataset.
    Eval(eval::EvalArgs),
    /// Measure per-frame latency and peak memory.
    Bench(bench::BenchArgs),
    /// Fine-tune the segmenter on a labeled manifest.
    Finetune(finetune::FinetuneArgs),
    /// Start the session service.
    Serve(serve::ServeArgs),
    /// Write a synthetic video with ground truth.
    Synth(synth::SynthArgs),
}

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

/// Configuration errors are usage errors; everything else failed at runtime.
impl From<tapseg_core::Error> for Failure {
    fn from(e: tapseg_core::Error) -> Self {
        match e.root() {
            tapseg_core::Error::Config { .. } => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// The config file (or defaults) with `--seed` applied.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> CmdResult<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p).usage()?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.set_seed(s);
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();

    if cli.print_schema {
        print!("{}", ExperimentConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("error: no command given (see `tapseg --help`)");
        return ExitCode::from(2);
    };
    let seed = cli.seed;
    let result = match command {
        Command::Run(a) => run::cmd_run(a, seed),
        Command::Eval(a) => eval::cmd_eval(a, seed),
        Command::Bench(a) => bench::cmd_bench(a, seed),
        Command::Finetune(a) => finetune::cmd_finetune(a, seed),
        Command::Serve(a) => serve::cmd_serve(a, seed),
        Command::Synth(a) => synth::cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
