use std::fs;
use std::path::PathBuf;

use clap::Args;
use tapseg_core::evalbench::{bench_latency, BenchReport};
use tapseg_core::pipeline::PipelineSession;

use crate::manifest::RunManifest;
use crate::run::{create_out_dir, prepare};
use crate::{load_config, Classify, CmdResult};

#[derive(Args)]
pub struct BenchArgs {
    /// Image directory, synthetic scene (`.json`) or container video.
    pub video: PathBuf,

    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Device label for the report; overrides `bench.device`.
    #[arg(long)]
    pub device: Option<String>,

    /// Frames discarded before timing, the initialization frame included.
    #[arg(long)]
    pub warmup: Option<usize>,

    /// Minimum number of timed frames.
    #[arg(long)]
    pub frames: Option<usize>,

    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn cmd_bench(args: BenchArgs, seed: Option<u64>) -> CmdResult {
    let mut config = load_config(args.config.as_deref(), seed)?;
    let lat = &mut config.bench.latency;
    if let Some(d) = args.device {
        lat.device = d;
    }
    if let Some(w) = args.warmup {
        lat.warmup_frames = w;
    }
    if let Some(n) = args.frames {
        lat.measured_frames = n;
    }
    let prepared = prepare(&config, &args.video)?;
    create_out_dir(&args.out)?;
    RunManifest::new("bench", &config, &args.out).write(&args.out).runtime()?;

    let mut source = prepared.source;
    let (tracker, segmenter, init, pipeline) = (prepared.tracker, prepared.segmenter, prepared.init, prepared.pipeline);
    let bench = bench_latency(
        |first| PipelineSession::initialize_on(first, tracker, segmenter, init, pipeline).map(|(s, _)| s),
        source.as_mut(),
        &config.bench.latency,
        &args.out.join("latency_raw.csv"),
    )?;

    let mut report = BenchReport::new(&config.bench.method, &config.bench.dataset);
    report.add_latency(&bench);
    let json = serde_json::json!({
        "report": report,
        "device": bench.device,
        "warmup_frames": bench.warmup_frames,
        "measured_frames": bench.samples.len(),
        "latency_ms": bench.stats,
        "memory": bench.memory,
    });
    fs::write(args.out.join("bench.json"), serde_json::to_vec_pretty(&json).runtime()?).runtime()?;
    let text = report.to_text();
    fs::write(args.out.join("bench.txt"), &text).runtime()?;
    print!("{text}");
    Ok(())
}
