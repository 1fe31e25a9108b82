//! Point-prompt fine-tuning harness: sample preparation, augmentation,
//! the BCE + soft-Dice objective, AdamW with cosine decay, and a training
//! loop around a [`TrainableModel`].

mod data;
mod loss;
mod model;
mod optim;
mod train;


pub use data::{load_manifest, load_training_set, load_validation_set, stats_path, ManifestEntry};
pub use loss::{loss, loss_with_logit_grad, LossReport, DICE_EPSILON};
pub use model::{LinearToyModel, ParamGroup, TrainableModel};
pub use optim::{cosine_lr, AdamW};
pub use train::{train, validation_dice, EpochStats, TrainOutcome, TrainRun};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::Point;
use crate::mask::{BinaryMask, InstanceMaskSet};
use crate::sampling::sample_random;

/// Which parameter groups stay fixed during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreezeMap {
    pub prompt_encoder: bool,
    pub image_encoder: bool,
    pub mask_decoder: bool,
}

impl Default for FreezeMap {
    fn default() -> Self {
        FreezeMap {
            prompt_encoder: true,
            image_encoder: false,
            mask_decoder: false,
        }
    }
}

impl FreezeMap {
    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::PromptEncoder => self.prompt_encoder,
            ParamGroup::ImageEncoder => self.image_encoder,
            ParamGroup::MaskDecoder => self.mask_decoder,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub weight_decay: f64,
    /// (height, width) every image and mask is resized to.
    pub input_hw: [usize; 2],
    pub points_per_prompt: usize,
    pub freeze: FreezeMap,
    /// Draw fresh prompt points every epoch instead of keeping the ones
    /// chosen when the sample was built.
    pub resample_prompts: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            lr_init: 1e-5,
            weight_decay: 0.01,
            input_hw: [1024, 1024],
            points_per_prompt: 5,
            freeze: FreezeMap::default(),
            resample_prompts: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::config("train.lr_init", "must be a positive number"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if self.input_hw.contains(&0) {
            return Err(Error::config("train.input_hw", "must be positive"));
        }
        if self.points_per_prompt == 0 {
            return Err(Error::config("train.points_per_prompt", "must be positive"));
        }
        Ok(())
    }

    pub fn input_hw(&self) -> (usize, usize) {
        (self.input_hw[0], self.input_hw[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// One sample per labeled instance.
    Instance,
    /// All labeled pixels form one region.
    Binary,
}

/// Per-channel standardization statistics, computed on min-max normalized
/// images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        mean: [0.0; 3],
        std: [1.0; 3],
    };

    /// Mean and population standard deviation over every pixel of every
    /// image. A zero deviation becomes 1.
    pub fn compute<'a>(images: impl IntoIterator<Item = &'a Frame>) -> NormStats {
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut n = 0usize;
        for f in images {
            let x = min_max_normalize(f);
            for px in x.chunks_exact(3) {
                for ch in 0..3 {
                    sum[ch] += px[ch] as f64;
                    sq[ch] += (px[ch] as f64).powi(2);
                }
            }
            n += f.height() * f.width();
        }
        if n == 0 {
            return NormStats::IDENTITY;
        }
        let mut out = NormStats::IDENTITY;
        for ch in 0..3 {
            let m = sum[ch] / n as f64;
            let var = (sq[ch] / n as f64 - m * m).max(0.0);
            out.mean[ch] = m;
            out.std[ch] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        out
    }
}

/// Per-channel min-max scaling to [0, 1], row-major HWC. A constant channel
/// maps to 0.
pub fn min_max_normalize(frame: &Frame) -> Vec<f32> {
    let px = frame.pixels();
    let mut lo = [u8::MAX; 3];
    let mut hi = [u8::MIN; 3];
    for p in px.chunks_exact(3) {
        for ch in 0..3 {
            lo[ch] = lo[ch].min(p[ch]);
            hi[ch] = hi[ch].max(p[ch]);
        }
    }
    px.chunks_exact(3)
        .flat_map(|p| {
            (0..3).map(move |ch| {
                if hi[ch] == lo[ch] {
                    0.0
                } else {
                    (p[ch] - lo[ch]) as f32 / (hi[ch] - lo[ch]) as f32
                }
            })
        })
        .collect()
}

/// A normalized H×W×3 image, row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct NormImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl NormImage {
    pub fn from_frame(frame: &Frame, stats: &NormStats) -> NormImage {
        let mut data = min_max_normalize(frame);
        for px in data.chunks_exact_mut(3) {
            for ch in 0..3 {
                px[ch] = ((px[ch] as f64 - stats.mean[ch]) / stats.std[ch]) as f32;
            }
        }
        NormImage {
            height: frame.height(),
            width: frame.width(),
            data,
        }
    }

    pub fn pixel(&self, r: usize, c: usize) -> &[f32] {
        let i = (r * self.width + c) * 3;
        &self.data[i..i + 3]
    }

    fn flipped(&self, lr: bool, ud: bool) -> NormImage {
        let (h, w) = (self.height, self.width);
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..h {
            let sr = if ud { h - 1 - r } else { r };
            for c in 0..w {
                let sc = if lr { w - 1 - c } else { c };
                data.extend_from_slice(self.pixel(sr, sc));
            }
        }
        NormImage {
            height: h,
            width: w,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub image: NormImage,
    pub gt_mask: BinaryMask,
    pub prompt_points: Vec<Point>,
}

impl TrainSample {
    /// Replace the prompts with `k` fresh draws inside the mask.
    pub fn resample_prompts(&mut self, k: usize, seed: u64) -> Result<()> {
        self.prompt_points = sample_random(&self.gt_mask, k, seed)?;
        Ok(())
    }
}

/// A region that produced no sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRegion {
    pub instance_id: Option<u32>,
    pub reason: String,
}

/// Build training samples from one labeled image.
///
/// The image and masks are resized to `config.input_hw` and prompt points
/// are drawn on the resized mask, so every prompt is a member of its mask.
/// Regions that are empty (before or after resizing) are skipped and
/// reported.
pub fn make_sample(
    image: &Frame,
    masks: &InstanceMaskSet,
    kind: LabelKind,
    stats: &NormStats,
    config: &TrainConfig,
    seed: u64,
) -> Result<(Vec<TrainSample>, Vec<SkippedRegion>)> {
    if masks.hw() != image.hw() {
        return Err(Error::invalid(format!(
            "mask is {:?} but image is {:?}",
            masks.hw(),
            image.hw()
        )));
    }
    let hw = config.input_hw();
    let regions: Vec<(Option<u32>, BinaryMask)> = match kind {
        LabelKind::Instance => masks.iter().map(|(id, m)| (Some(id), m.clone())).collect(),
        LabelKind::Binary => vec![(None, masks.union())],
    };
    let resized = image.resized(hw)?;
    let norm = NormImage::from_frame(&resized, stats);
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (n, (id, mask)) in regions.into_iter().enumerate() {
        let mask = mask.resized_nearest(hw);
        if mask.is_empty() {
            tracing::warn!(instance = ?id, "skipping empty training region");
            skipped.push(SkippedRegion {
                instance_id: id,
                reason: "region is empty at the training resolution".into(),
            });
            continue;
        }
        let points = sample_random(&mask, config.points_per_prompt, seed.wrapping_add(n as u64))?;
        samples.push(TrainSample {
            image: norm.clone(),
            gt_mask: mask,
            prompt_points: points,
        });
    }
    Ok((samples, skipped))
}

/// Apply a left-right and an up-down flip, each with probability 0.5.
pub fn augment(sample: &TrainSample, seed: u64) -> TrainSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lr = rng.gen_bool(0.5);
    let ud = rng.gen_bool(0.5);
    flip(sample, lr, ud)
}

/// Flip image, mask and prompts together. A point maps to `(W - x, y)`
/// under a left-right flip and `(x, H - y)` under an up-down flip.
pub fn flip(sample: &TrainSample, lr: bool, ud: bool) -> TrainSample {
    let (h, w) = sample.gt_mask.hw();
    let mut mask = sample.gt_mask.clone();
    if lr {
        mask = mask.flipped_lr();
    }
    if ud {
        mask = mask.flipped_ud();
    }
    let points = sample
        .prompt_points
        .iter()
        .map(|p| {
            Point::new(
                if lr { w as f64 - p.x } else { p.x },
                if ud { h as f64 - p.y } else { p.y },
            )
        })
        .collect();
    TrainSample {
        image: sample.image.flipped(lr, ud),
        gt_mask: mask,
        prompt_points: points,
    }
}
