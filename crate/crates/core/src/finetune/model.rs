use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::NormImage;
use crate::error::{Error, Result};
use crate::evalbench::ParameterInventory;
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    PromptEncoder,
    ImageEncoder,
    MaskDecoder,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 3] = [ParamGroup::PromptEncoder, ParamGroup::ImageEncoder, ParamGroup::MaskDecoder];

    pub fn tag(self) -> &'static str {
        match self {
            ParamGroup::PromptEncoder => "prompt_encoder",
            ParamGroup::ImageEncoder => "image_encoder",
            ParamGroup::MaskDecoder => "mask_decoder",
        }
    }

    pub fn from_tag(tag: &str) -> Option<ParamGroup> {
        ParamGroup::ALL.into_iter().find(|g| g.tag() == tag)
    }
}

/// A promptable segmenter the harness can optimize.
///
/// Parameters are exposed as tagged slices ("slots"); the harness owns the
/// optimizer and applies updates through [`TrainableModel::params_mut`].
pub trait TrainableModel {
    fn name(&self) -> &str;

    /// Group tag of every slot, in slot order.
    fn slot_tags(&self) -> Vec<String>;

    fn params(&self, slot: usize) -> &[f64];

    fn params_mut(&mut self, slot: usize) -> &mut [f64];

    /// Per-pixel logits at the image resolution, row-major.
    fn forward(&self, image: &NormImage, points: &[Point]) -> Result<Vec<f64>>;

    /// Gradient of the loss with respect to every slot, given its gradient
    /// with respect to the logits.
    fn backward(&self, image: &NormImage, points: &[Point], grad_logits: &[f64]) -> Result<Vec<Vec<f64>>>;

    fn save_checkpoint(&self, out: &mut dyn Write) -> Result<()>;

    fn load_checkpoint(&mut self, input: &mut dyn Read) -> Result<()>;
}

/// Map every slot to its group, failing on unknown tags or a group with no
/// slot.
pub(crate) fn slot_groups(model: &dyn TrainableModel) -> Result<Vec<ParamGroup>> {
    let groups = model
        .slot_tags()
        .iter()
        .map(|t| {
            ParamGroup::from_tag(t)
                .ok_or_else(|| Error::config("model.groups", format!("unknown parameter group tag `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    for g in ParamGroup::ALL {
        if !groups.contains(&g) {
            return Err(Error::config(
                "model.groups",
                format!("model `{}` has no `{}` parameters", model.name(), g.tag()),
            ));
        }
    }
    Ok(groups)
}

/// Small differentiable point-prompted segmenter.
///
/// Per pixel: an image feature `f = w·rgb + b`, a prompt feature
/// `h = amp · Σ exp(-scale · d²)` over the prompt points (distances in
/// image-normalized units), and logit `u·f + v·h + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearToyModel {
    /// `[w_r, w_g, w_b, b]`
    pub image_encoder: Vec<f64>,
    /// `[amp, scale]`
    pub prompt_encoder: Vec<f64>,
    /// `[u, v, c]`
    pub mask_decoder: Vec<f64>,
}

impl Default for LinearToyModel {
    fn default() -> Self {
        LinearToyModel {
            image_encoder: vec![0.1, 0.1, 0.1, 0.0],
            prompt_encoder: vec![1.0, 50.0],
            mask_decoder: vec![1.0, 1.0, -0.5],
        }
    }
}

struct PixelFeatures {
    f: Vec<f64>,
    /// Σ exp(-scale·d²) and Σ d²·exp(-scale·d²) per pixel.
    heat: Vec<(f64, f64)>,
}

impl LinearToyModel {
    fn features(&self, image: &NormImage, points: &[Point]) -> PixelFeatures {
        let (h, w) = (image.height, image.width);
        let [wr, wg, wb, b] = [
            self.image_encoder[0],
            self.image_encoder[1],
            self.image_encoder[2],
            self.image_encoder[3],
        ];
        let scale = self.prompt_encoder[1];
        let mut f = Vec::with_capacity(h * w);
        let mut heat = Vec::with_capacity(h * w);
        for r in 0..h {
            let y = (r as f64 + 0.5) / h as f64;
            for c in 0..w {
                let x = (c as f64 + 0.5) / w as f64;
                let px = image.pixel(r, c);
                f.push(wr * px[0] as f64 + wg * px[1] as f64 + wb * px[2] as f64 + b);
                let (mut s, mut sd) = (0.0, 0.0);
                for p in points {
                    let d2 = (x - p.x / w as f64).powi(2) + (y - p.y / h as f64).powi(2);
                    let e = (-scale * d2).exp();
                    s += e;
                    sd += d2 * e;
                }
                heat.push((s, sd));
            }
        }
        PixelFeatures { f, heat }
    }

    fn check(&self, image: &NormImage, n: usize) -> Result<()> {
        if n != image.height * image.width {
            return Err(Error::invalid("gradient length does not match the image"));
        }
        Ok(())
    }
}

impl TrainableModel for LinearToyModel {
    fn name(&self) -> &str {
        "linear_toy"
    }

    fn slot_tags(&self) -> Vec<String> {
        ParamGroup::ALL.iter().map(|g| g.tag().to_string()).collect()
    }

    fn params(&self, slot: usize) -> &[f64] {
        match slot {
            0 => &self.prompt_encoder,
            1 => &self.image_encoder,
            _ => &self.mask_decoder,
        }
    }

    fn params_mut(&mut self, slot: usize) -> &mut [f64] {
        match slot {
            0 => &mut self.prompt_encoder,
            1 => &mut self.image_encoder,
            _ => &mut self.mask_decoder,
        }
    }

    fn forward(&self, image: &NormImage, points: &[Point]) -> Result<Vec<f64>> {
        let feats = self.features(image, points);
        let amp = self.prompt_encoder[0];
        let [u, v, c] = [self.mask_decoder[0], self.mask_decoder[1], self.mask_decoder[2]];
        Ok(feats
            .f
            .iter()
            .zip(&feats.heat)
            .map(|(&f, &(s, _))| u * f + v * amp * s + c)
            .collect())
    }

    fn backward(&self, image: &NormImage, points: &[Point], grad_logits: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check(image, grad_logits.len())?;
        let feats = self.features(image, points);
        let amp = self.prompt_encoder[0];
        let (u, v) = (self.mask_decoder[0], self.mask_decoder[1]);
        let mut g_prompt = vec![0.0; 2];
        let mut g_image = vec![0.0; 4];
        let mut g_dec = vec![0.0; 3];
        for (i, &gz) in grad_logits.iter().enumerate() {
            let f = feats.f[i];
            let (s, sd) = feats.heat[i];
            g_dec[0] += gz * f;
            g_dec[1] += gz * amp * s;
            g_dec[2] += gz;
            let gf = gz * u;
            let px = image.pixel(i / image.width, i % image.width);
            for ch in 0..3 {
                g_image[ch] += gf * px[ch] as f64;
            }
            g_image[3] += gf;
            let gh = gz * v;
            g_prompt[0] += gh * s;
            g_prompt[1] -= gh * amp * sd;
        }
        Ok(vec![g_prompt, g_image, g_dec])
    }

    fn save_checkpoint(&self, out: &mut dyn Write) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }

    fn load_checkpoint(&mut self, input: &mut dyn Read) -> Result<()> {
        *self = serde_json::from_reader(input)?;
        Ok(())
    }
}

impl ParameterInventory for LinearToyModel {
    fn parameter_groups(&self) -> Result<Vec<(String, usize)>> {
        Ok((0..3).map(|s| (self.slot_tags()[s].clone(), self.params(s).len())).collect())
    }
}
