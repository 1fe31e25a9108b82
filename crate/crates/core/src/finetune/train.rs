use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::slot_groups;
use super::{augment, cosine_lr, loss_with_logit_grad, AdamW, TrainConfig, TrainSample, TrainableModel, DICE_EPSILON};
use crate::error::{Error, Result};
use crate::evalbench::dice;
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_bce: f64,
    pub mean_dice: f64,
    pub mean_total: f64,
    /// Mean hard Dice on the validation split, if there is one.
    pub val_dice: Option<f64>,
}

impl EpochStats {
    /// Higher is better: validation Dice, or negated training loss when
    /// there is no validation split.
    fn score(&self) -> f64 {
        self.val_dice.unwrap_or(-self.mean_total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub run_id: String,
    pub epochs: Vec<EpochStats>,
    pub total_steps: usize,
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub log_path: PathBuf,
}

/// Harness state stored next to each checkpoint so a run can resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResumeState {
    config: TrainConfig,
    step: usize,
    optimizer: AdamW,
    epochs: Vec<EpochStats>,
    best_epoch: usize,
}

#[derive(Debug, Serialize)]
struct LogRow {
    epoch: usize,
    step: usize,
    lr: f64,
    bce: f64,
    dice: f64,
    total: f64,
    val_dice: Option<f64>,
}

/// Where a training run writes, and optionally which checkpoint to resume.
#[derive(Debug, Clone)]
pub struct TrainRun<'a> {
    pub out_dir: &'a Path,
    pub run_id: &'a str,
    pub resume_from: Option<&'a Path>,
    /// Stop after this epoch, leaving a resumable checkpoint.
    pub stop_after: Option<usize>,
}

fn checkpoint_path(dir: &Path, run_id: &str, epoch: usize) -> PathBuf {
    dir.join(format!("{run_id}-e{epoch}.ckpt"))
}

fn state_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("state.json")
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Mean hard Dice of the model's thresholded predictions.
pub fn validation_dice(model: &dyn TrainableModel, samples: &[TrainSample]) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let mut sum = 0.0;
    for s in samples {
        let logits = model.forward(&s.image, &s.prompt_points)?;
        let (h, w) = s.gt_mask.hw();
        let pred = BinaryMask::from_bits(h, w, logits.iter().map(|&z| z >= 0.0).collect())?;
        sum += dice(&pred, &s.gt_mask)?;
    }
    Ok(Some(sum / samples.len() as f64))
}

/// Optimize `model` on `train_set`.
///
/// Writes a CSV log with one row per optimizer step (validation Dice on the
/// last step of each epoch), a checkpoint after every epoch, and keeps only
/// the latest and the best checkpoint on disk.
pub fn train(
    model: &mut dyn TrainableModel,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    config: &TrainConfig,
    run: &TrainRun,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let groups = slot_groups(model)?;
    let hw = config.input_hw();
    for s in train_set.iter().chain(val_set) {
        if s.gt_mask.hw() != hw || (s.image.height, s.image.width) != hw {
            return Err(Error::invalid(format!(
                "sample is {:?} but the training resolution is {hw:?}",
                s.gt_mask.hw()
            )));
        }
    }
    fs::create_dir_all(run.out_dir).map_err(|e| Error::io(run.out_dir, e))?;

    let batches = train_set.len().div_ceil(config.batch_size);
    let total_steps = config.epochs * batches;
    let sizes: Vec<usize> = (0..groups.len()).map(|s| model.params(s).len()).collect();

    let mut state = match run.resume_from {
        Some(ckpt) => {
            let st: ResumeState = serde_json::from_reader(BufReader::new(
                File::open(state_path(ckpt)).map_err(|e| Error::io(state_path(ckpt), e))?,
            ))?;
            let mut f = BufReader::new(File::open(ckpt).map_err(|e| Error::io(ckpt, e))?);
            if st.config != *config {
                return Err(Error::config("train", "resumed run must use the original training config"));
            }
            model.load_checkpoint(&mut f)?;
            st
        }
        None => ResumeState {
            config: config.clone(),
            step: 0,
            optimizer: AdamW::new(&sizes, config.weight_decay),
            epochs: Vec::new(),
            best_epoch: 0,
        },
    };

    let log_path = run.out_dir.join(format!("{}-log.csv", run.run_id));
    let resuming = run.resume_from.is_some() && log_path.exists();
    let log_file = OpenOptions::new()
        .create(true)
        .append(resuming)
        .write(true)
        .truncate(!resuming)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut log = csv::WriterBuilder::new().has_headers(!resuming).from_writer(BufWriter::new(log_file));
    let csv_err = |e: csv::Error| Error::invalid(format!("cannot write training log: {e}"));

    let start_epoch = state.epochs.len() + 1;
    let end_epoch = run.stop_after.unwrap_or(config.epochs).min(config.epochs);
    for epoch in start_epoch..=end_epoch {
        let order = shuffled(train_set.len(), mix(config.seed, epoch as u64, 0));
        let (mut bce_sum, mut dice_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let lr = cosine_lr(config.lr_init, state.step, total_steps);
            let mut grads: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            let (mut bce, mut dl, mut tot) = (0.0, 0.0, 0.0);
            for &i in chunk {
                let key = mix(config.seed, epoch as u64, i as u64 + 1);
                let mut sample = train_set[i].clone();
                if config.resample_prompts {
                    sample.resample_prompts(config.points_per_prompt, key)?;
                }
                let sample = augment(&sample, key.rotate_left(17));
                let logits = model.forward(&sample.image, &sample.prompt_points)?;
                let (report, g) = loss_with_logit_grad(&logits, &sample.gt_mask, DICE_EPSILON)?;
                let slot_grads = model.backward(&sample.image, &sample.prompt_points, &g)?;
                for (acc, sg) in grads.iter_mut().zip(&slot_grads) {
                    for (a, v) in acc.iter_mut().zip(sg) {
                        *a += v / chunk.len() as f64;
                    }
                }
                bce += report.bce;
                dl += report.dice;
                tot += report.total;
                bce_sum += report.bce;
                dice_sum += report.dice;
                total_sum += report.total;
            }
            state.optimizer.begin_step();
            for (slot, group) in groups.iter().enumerate() {
                if config.freeze.is_frozen(*group) {
                    continue;
                }
                state.optimizer.update(slot, model.params_mut(slot), &grads[slot], lr);
            }
            let n = chunk.len() as f64;
            let last = b + 1 == batches;
            let val_dice = if last { validation_dice(model, val_set)? } else { None };
            log.serialize(LogRow {
                epoch,
                step: state.step,
                lr,
                bce: bce / n,
                dice: dl / n,
                total: tot / n,
                val_dice,
            })
            .map_err(csv_err)?;
            state.step += 1;
            if last {
                let m = train_set.len() as f64;
                let stats = EpochStats {
                    epoch,
                    mean_bce: bce_sum / m,
                    mean_dice: dice_sum / m,
                    mean_total: total_sum / m,
                    val_dice,
                };
                tracing::info!(epoch, loss = stats.mean_total, val_dice = ?stats.val_dice, "epoch done");
                state.epochs.push(stats);
            }
        }
        log.flush().map_err(|e| Error::io(&log_path, e))?;

        let current = state.epochs.last().expect("epoch just pushed");
        let prev_best = state.best_epoch;
        if prev_best == 0 || current.score() > state.epochs[prev_best - 1].score() {
            state.best_epoch = epoch;
        }
        let ckpt = checkpoint_path(run.out_dir, run.run_id, epoch);
        let mut f = BufWriter::new(File::create(&ckpt).map_err(|e| Error::io(&ckpt, e))?);
        model.save_checkpoint(&mut f)?;
        drop(f);
        let sp = state_path(&ckpt);
        serde_json::to_writer(BufWriter::new(File::create(&sp).map_err(|e| Error::io(&sp, e))?), &state)?;
        // keep only the latest and the best epoch on disk
        for old in [epoch.saturating_sub(1), prev_best] {
            if old > 0 && old != epoch && old != state.best_epoch {
                let p = checkpoint_path(run.out_dir, run.run_id, old);
                let _ = fs::remove_file(&p);
                let _ = fs::remove_file(state_path(&p));
            }
        }
    }

    Ok(TrainOutcome {
        run_id: run.run_id.to_string(),
        total_steps,
        best_epoch: state.best_epoch,
        best_checkpoint: checkpoint_path(run.out_dir, run.run_id, state.best_epoch),
        last_checkpoint: checkpoint_path(run.out_dir, run.run_id, state.epochs.len()),
        epochs: state.epochs,
        log_path,
    })
}
