use std::time::Duration;

use super::{PromptBundle, PromptModes, ProbMap, SegmenterAdapter};
use crate::error::Result;
use crate::frame::Frame;
use crate::mask::BinaryMask;

/// Grayscale threshold plus connected components.
///
/// Points select the union of bright components under them; a box selects
/// the largest bright component inside it; text returns the bright map.
#[derive(Debug, Clone)]
pub struct ThresholdSegmenter {
    pub intensity_threshold: f32,
    native: Option<(usize, usize)>,
}

impl Default for ThresholdSegmenter {
    fn default() -> Self {
        Self::new(128.0)
    }
}

impl ThresholdSegmenter {
    pub fn new(intensity_threshold: f32) -> Self {
        Self {
            intensity_threshold,
            native: None,
        }
    }

    /// Run at a fixed inference resolution, like a foundation model would.
    pub fn with_native_input(mut self, hw: (usize, usize)) -> Self {
        self.native = Some(hw);
        self
    }

    fn bright(&self, image: &Frame) -> BinaryMask {
        let (h, w) = image.hw();
        let bits = image.gray_plane().into_iter().map(|g| g >= self.intensity_threshold).collect();
        BinaryMask::from_bits(h, w, bits).expect("frame dimensions are positive")
    }

    fn select(&self, bright: &BinaryMask, labels: &[u32], prompt: &PromptBundle) -> BinaryMask {
        let (h, w) = bright.hw();
        let mut chosen: Vec<u32> = Vec::new();
        if !prompt.positive_points.is_empty() {
            for p in &prompt.positive_points {
                if let Some((r, c)) = p.cell(h, w) {
                    let l = labels[r * w + c];
                    if l != 0 && !chosen.contains(&l) {
                        chosen.push(l);
                    }
                }
            }
            return BinaryMask::from_bits(h, w, labels.iter().map(|l| *l != 0 && chosen.contains(l)).collect())
                .expect("same dimensions");
        }
        if let Some(b) = &prompt.bbox {
            let inside = BinaryMask::from_fn(h, w, |r, c| bright.get(r, c) && b.contains_pixel(r, c));
            return inside
                .components()
                .into_iter()
                .fold(None::<BinaryMask>, |best, c| match best {
                    Some(b) if b.count() >= c.count() => Some(b),
                    _ => Some(c),
                })
                .unwrap_or_else(|| BinaryMask::empty(h, w));
        }
        // text only
        bright.clone()
    }
}

impl SegmenterAdapter for ThresholdSegmenter {
    fn name(&self) -> &str {
        "threshold"
    }

    fn prompt_modes(&self) -> PromptModes {
        PromptModes::ALL
    }

    fn native_input_hw(&self) -> Option<(usize, usize)> {
        self.native
    }

    fn predict(&mut self, image: &Frame, prompts: &[PromptBundle]) -> Result<Vec<ProbMap>> {
        let bright = self.bright(image);
        let (labels, _) = bright.label_map();
        Ok(prompts
            .iter()
            .map(|p| ProbMap::from_mask(&self.select(&bright, &labels, p)))
            .collect())
    }

    fn text_map(&mut self, image: &Frame, _text: &str) -> Result<ProbMap> {
        Ok(ProbMap::from_mask(&self.bright(image)))
    }
}

/// Constant-cost stand-in: sleeps, then marks only the prompt cells.
#[derive(Debug, Clone)]
pub struct FixedCostSegmenter {
    cost: Duration,
}

impl FixedCostSegmenter {
    pub fn new(cost: Duration) -> Self {
        Self { cost }
    }
}

impl SegmenterAdapter for FixedCostSegmenter {
    fn name(&self) -> &str {
        "fixed_cost"
    }

    fn prompt_modes(&self) -> PromptModes {
        PromptModes::POINTS
    }

    fn predict(&mut self, image: &Frame, prompts: &[PromptBundle]) -> Result<Vec<ProbMap>> {
        if !self.cost.is_zero() {
            std::thread::sleep(self.cost);
        }
        let (h, w) = image.hw();
        Ok(prompts
            .iter()
            .map(|p| {
                let mut m = BinaryMask::empty(h, w);
                for (r, c) in p.positive_points.iter().filter_map(|q| q.cell(h, w)) {
                    m.set(r, c, true);
                }
                ProbMap::from_mask(&m)
            })
            .collect())
    }
}
