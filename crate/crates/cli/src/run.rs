use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, Context};
use clap::Args;
use serde::Serialize;
use tapseg_core::config::ExperimentConfig;
use tapseg_core::maskio::load_mask_png;
use tapseg_core::pipeline::{self, FrameResult, InitInput, PipelineConfig, RunSpec, RunSummary};
use tapseg_core::video::{frame_file_name, open_video, VideoSource};
use tapseg_core::{Frame, SegmenterAdapter, StrategyKind, TrackerAdapter};

use crate::manifest::{now, RunManifest};
use crate::{load_config, overlay, Classify, CmdResult, Failure};

#[derive(Args)]
pub struct RunArgs {
    /// Image directory, synthetic scene (`.json`) or container video.
    pub video: PathBuf,

    /// Experiment config (TOML, or JSON for `.json`).
    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,

    /// Query point sampling strategy.
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<StrategyKind>,

    /// Query points per instance.
    #[arg(long)]
    pub points: Option<usize>,

    /// Also write an overlay PNG per frame.
    #[arg(long)]
    pub overlays: bool,
}

pub fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown strategy `{s}` (random, grid, shi_tomasi, kmedoids, manual)"))
}

/// A video opened and the adapters built for it.
pub struct Prepared {
    pub source: Box<dyn VideoSource>,
    pub tracker: Box<dyn TrackerAdapter>,
    pub segmenter: Box<dyn SegmenterAdapter>,
    pub init: InitInput,
    pub pipeline: PipelineConfig,
}

/// Validate the config, open `video` and build the adapters. Problems with
/// the inputs are usage errors.
pub fn prepare(config: &ExperimentConfig, video: &Path) -> CmdResult<Prepared> {
    config.validate()?;
    let opened = open_video(video, config.pipeline.fps, config.pipeline.decode_helper.as_deref()).usage()?;
    let pipeline = config.pipeline_config();
    let tracker = pipeline.tracker.build(opened.motion.clone())?;
    let segmenter = pipeline.segmenter.build()?;
    let enc = config.pipeline.mask_encoding;
    let init = config
        .pipeline
        .init
        .resolve(config.pipeline.init_mode, |p| load_mask_png(p, enc, 0))
        .usage()?;
    Ok(Prepared {
        source: opened.source,
        tracker,
        segmenter,
        init,
        pipeline,
    })
}

pub fn create_out_dir(out: &Path) -> CmdResult {
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .usage()
}

/// Passes frames through, keeping the most recent ones for overlay rendering.
struct Tee {
    inner: Box<dyn VideoSource>,
    recent: Arc<Mutex<Vec<Frame>>>,
}

impl VideoSource for Tee {
    fn next_frame(&mut self) -> tapseg_core::Result<Option<Frame>> {
        let f = self.inner.next_frame()?;
        if let Some(f) = &f {
            let mut recent = self.recent.lock().expect("frame tee");
            if recent.len() == 2 {
                recent.remove(0);
            }
            recent.push(f.clone());
        }
        Ok(f)
    }

    fn len_hint(&self) -> Option<u64> {
        self.inner.len_hint()
    }

    fn dropped(&self) -> u64 {
        self.inner.dropped()
    }
}

/// Written at the end of a run, next to the manifest.
#[derive(Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    summary: &'a RunSummary,
    started_at: &'a str,
    finished_at: String,
}

struct Outputs {
    masks: BufWriter<File>,
    timings: csv::Writer<File>,
    overlays: Option<(PathBuf, Arc<Mutex<Vec<Frame>>>)>,
}

impl Outputs {
    fn write(&mut self, r: &FrameResult) -> anyhow::Result<()> {
        serde_json::to_writer(&mut self.masks, &r.to_record(false))?;
        self.masks.write_all(b"\n")?;
        let t = r.timings;
        self.timings.write_record([
            r.frame_index.to_string(),
            t.track_ms.to_string(),
            t.segment_ms.to_string(),
            t.total_ms.to_string(),
        ])?;
        if let Some((dir, recent)) = &self.overlays {
            let recent = recent.lock().expect("frame tee");
            let frame = recent
                .iter()
                .find(|f| f.index == r.frame_index)
                .ok_or_else(|| anyhow!("frame {} is no longer buffered", r.frame_index))?;
            overlay::render(frame, r).save(dir.join(frame_file_name(r.frame_index)))?;
        }
        Ok(())
    }

    fn finish(mut self) -> anyhow::Result<()> {
        self.masks.flush()?;
        self.timings.flush()?;
        Ok(())
    }
}

pub fn cmd_run(args: RunArgs, seed: Option<u64>) -> CmdResult {
    let mut config = load_config(args.config.as_deref(), seed)?;
    if let Some(k) = args.strategy {
        config.sampling.kind = k;
    }
    if let Some(n) = args.points {
        config.sampling.points_per_instance = n;
    }
    config.pipeline.overlays |= args.overlays;
    let prepared = prepare(&config, &args.video)?;
    create_out_dir(&args.out)?;
    let manifest = RunManifest::new("run", &config, &args.out);
    manifest.write(&args.out).runtime()?;

    let recent = Arc::new(Mutex::new(Vec::new()));
    let overlays = if config.pipeline.overlays {
        let dir = args.out.join("overlays");
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display())).runtime()?;
        Some((dir, recent.clone()))
    } else {
        None
    };
    let open = |name: &str| {
        let p = args.out.join(name);
        File::create(&p).with_context(|| format!("cannot create {}", p.display()))
    };
    let mut timings = csv::Writer::from_writer(open("timings.csv").runtime()?);
    timings
        .write_record(["frame_index", "track_ms", "segment_ms", "total_ms"])
        .runtime()?;
    let mut outputs = Outputs {
        masks: BufWriter::new(open("masks.jsonl").runtime()?),
        timings,
        overlays,
    };

    let mut source = Tee {
        inner: prepared.source,
        recent,
    };
    let spec = RunSpec {
        tracker: prepared.tracker,
        segmenter: prepared.segmenter,
        init: prepared.init,
        config: prepared.pipeline,
    };
    let mut sink = |r: &FrameResult| outputs.write(r).map_err(|e| tapseg_core::Error::invalid(format!("{e:#}")));
    let outcome = pipeline::run(&mut source, spec, &mut sink);
    let (summary, failure) = match outcome {
        Ok(s) => (s, None),
        Err(f) => (f.summary, Some(f.error)),
    };
    outputs.finish().runtime()?;
    let report = RunReport {
        summary: &summary,
        started_at: &manifest.started_at,
        finished_at: now(),
    };
    let path = args.out.join("summary.json");
    fs::write(&path, serde_json::to_vec_pretty(&report).runtime()?)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()?;

    if let Some(e) = failure {
        return Err(Failure::from(e));
    }
    let total = summary.total_ms.map(|s| format!(", {:.2} ms/frame mean, p90 {:.2} ms", s.mean, s.p90));
    println!(
        "{} frames -> {}{}",
        summary.frames,
        args.out.display(),
        total.unwrap_or_default()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names() {
        assert_eq!(parse_strategy("kmedoids").unwrap(), StrategyKind::Kmedoids);
        assert_eq!(parse_strategy("shi-tomasi").unwrap(), StrategyKind::ShiTomasi);
        assert!(parse_strategy("kmeans").is_err());
    }
}
