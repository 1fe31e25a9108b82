use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use tapseg_core::evalbench::{evaluate_run, ingest_dataset, BenchReport, GtKind, MetricRecord, Target};
use tapseg_core::pipeline::FrameRecord;
use tapseg_core::InstanceMaskSet;

use crate::{load_config, Classify, CmdResult};

#[derive(Clone, Copy, ValueEnum)]
pub enum GtKindArg {
    Instance,
    Binary,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Run output directory, or a `masks.jsonl` file.
    pub results: PathBuf,

    /// Dataset root holding numbered frames and masks.
    pub dataset: PathBuf,

    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Ground-truth kind; overrides `eval.gt_kind`.
    #[arg(long, value_enum)]
    pub gt_kind: Option<GtKindArg>,

    /// Where reports go (default: the results directory).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn read_results(path: &Path) -> anyhow::Result<Vec<InstanceMaskSet>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FrameRecord =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: not a frame record", path.display(), n + 1))?;
        out.push(rec.masks()?);
    }
    Ok(out)
}

fn write_per_frame(path: &Path, records: &[MetricRecord]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["frame_index", "instance_id", "matched_pred", "iou", "dice"])?;
    for r in records {
        let target = match r.instance_id {
            Target::Instance(id) => id.to_string(),
            Target::Binary(_) => "binary".into(),
        };
        w.write_record([
            r.frame_index.to_string(),
            target,
            r.matched_pred.map(|p| p.to_string()).unwrap_or_default(),
            r.iou.to_string(),
            r.dice.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_eval(args: EvalArgs, seed: Option<u64>) -> CmdResult {
    let config = load_config(args.config.as_deref(), seed)?;
    let kind = match args.gt_kind {
        Some(GtKindArg::Instance) => GtKind::Instance,
        Some(GtKindArg::Binary) => GtKind::Binary,
        None => config.eval.gt_kind,
    };
    let (masks_path, default_out) = if args.results.is_dir() {
        (args.results.join("masks.jsonl"), args.results.clone())
    } else {
        let parent = args.results.parent().unwrap_or(Path::new(".")).to_path_buf();
        (args.results.clone(), parent)
    };
    let results = read_results(&masks_path).usage()?;
    let dataset = ingest_dataset(&args.dataset, &config.eval.layout).usage()?;
    let gt = dataset.ground_truth()?;
    let (records, summary) = evaluate_run(&results, &gt, kind)?;

    let out = args.out.unwrap_or(default_out);
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display())).usage()?;
    write_per_frame(&out.join("eval_per_frame.csv"), &records).runtime()?;
    let report = BenchReport::new(&config.bench.method, &config.bench.dataset).with_accuracy(&summary);
    let json = serde_json::json!({ "report": report, "frames": summary.frames });
    fs::write(out.join("eval_report.json"), serde_json::to_vec_pretty(&json).runtime()?).runtime()?;
    let text = report.to_text();
    fs::write(out.join("eval_report.txt"), &text).runtime()?;
    print!("{text}");
    Ok(())
}
