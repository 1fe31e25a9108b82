use std::path::PathBuf;

use clap::Args;
use tapseg_core::evalbench::count_learnable_params;
use tapseg_core::finetune::{load_training_set, load_validation_set, train, LinearToyModel, TrainRun};

use crate::manifest::RunManifest;
use crate::run::create_out_dir;
use crate::{load_config, Classify, CmdResult};

#[derive(Args)]
pub struct FinetuneArgs {
    /// JSON-lines manifest of training images and masks.
    pub manifest: PathBuf,

    /// Held-out manifest used to pick the best checkpoint.
    #[arg(long)]
    pub val: Option<PathBuf>,

    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Output directory for checkpoints and the loss log.
    #[arg(short, long)]
    pub out: PathBuf,

    /// Prefix of checkpoint and log files.
    #[arg(long, default_value = "finetune")]
    pub run_id: String,

    /// Continue from this checkpoint; the training config must be unchanged.
    #[arg(long)]
    pub resume: Option<PathBuf>,

    /// Overrides `train.epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Stop after this many epochs as if interrupted.
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

pub fn cmd_finetune(args: FinetuneArgs, seed: Option<u64>) -> CmdResult {
    let mut config = load_config(args.config.as_deref(), seed)?;
    if let Some(e) = args.epochs {
        config.train.epochs = e;
    }
    config.train.validate()?;
    let (train_set, skipped, stats) = load_training_set(&args.manifest, &config.train).usage()?;
    let val_set = match &args.val {
        Some(v) => load_validation_set(v, &config.train, &stats).usage()?.0,
        None => Vec::new(),
    };
    for s in &skipped {
        eprintln!("skipped region: {}", s.reason);
    }
    create_out_dir(&args.out)?;
    RunManifest::new("finetune", &config, &args.out).write(&args.out).runtime()?;

    let mut model = LinearToyModel::default();
    let learnable = count_learnable_params(&model, &config.train.freeze)?;
    let run = TrainRun {
        out_dir: &args.out,
        run_id: &args.run_id,
        resume_from: args.resume.as_deref(),
        stop_after: args.stop_after,
    };
    let outcome = train(&mut model, &train_set, &val_set, &config.train, &run)?;
    for e in &outcome.epochs {
        let val = e.val_dice.map(|v| format!(" val_dice {v:.4}")).unwrap_or_default();
        println!(
            "epoch {:>3}  bce {:.4}  dice {:.4}  total {:.4}{val}",
            e.epoch, e.mean_bce, e.mean_dice, e.mean_total
        );
    }
    println!(
        "{} samples, {} steps, {learnable:.1} M learnable parameters; best epoch {} -> {}",
        train_set.len(),
        outcome.total_steps,
        outcome.best_epoch,
        outcome.best_checkpoint.display()
    );
    Ok(())
}
