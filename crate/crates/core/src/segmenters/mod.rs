//! Point-promptable per-frame segmentation and first-frame mask generation.

mod reference;
mod remote;

use serde::{Deserialize, Serialize};

pub use reference::{FixedCostSegmenter, ThresholdSegmenter};
pub use remote::{serve_segmenter, SocketSegmenter};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{rescale_points, BoxPrompt, Point};
use crate::mask::{BinaryMask, InstanceMaskSet};

/// Probability threshold for turning a predicted map into a mask.
pub const MASK_THRESHOLD: f32 = 0.5;
/// Text-derived components smaller than this fraction of the frame are noise.
pub const TEXT_COMPONENT_FLOOR: f64 = 0.005;
pub const DEFAULT_TEXT_PROMPT: &str = "surgical tool";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptModes {
    pub points: bool,
    #[serde(rename = "box")]
    pub boxes: bool,
    pub text: bool,
}

impl PromptModes {
    pub const ALL: PromptModes = PromptModes {
        points: true,
        boxes: true,
        text: true,
    };
    pub const POINTS: PromptModes = PromptModes {
        points: true,
        boxes: false,
        text: false,
    };
}

/// Prompts for one instance. Points are positive clicks in frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub instance_id: u32,
    #[serde(default)]
    pub positive_points: Vec<Point>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoxPrompt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl PromptBundle {
    pub fn points(instance_id: u32, points: Vec<Point>) -> Self {
        Self {
            instance_id,
            positive_points: points,
            bbox: None,
            text: None,
        }
    }

    pub fn boxed(instance_id: u32, bbox: BoxPrompt) -> Self {
        Self {
            instance_id,
            positive_points: Vec::new(),
            bbox: Some(bbox),
            text: None,
        }
    }

    pub fn text(instance_id: u32, text: impl Into<String>) -> Self {
        Self {
            instance_id,
            positive_points: Vec::new(),
            bbox: None,
            text: Some(text.into()),
        }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.positive_points.is_empty() && self.bbox.is_none() && self.text.is_none() {
            return Err(Error::invalid(format!("prompt for instance {} is empty", self.instance_id)));
        }
        if let Some(p) = self.positive_points.iter().find(|p| !p.in_bounds(height, width)) {
            return Err(Error::invalid(format!(
                "prompt point ({}, {}) for instance {} is outside the {height}x{width} frame",
                p.x, p.y, self.instance_id
            )));
        }
        if let Some(b) = &self.bbox {
            BoxPrompt::new(b.x_min, b.y_min, b.x_max, b.y_max)?;
            if !b.intersects_frame(height, width) {
                return Err(Error::invalid(format!("box for instance {} lies outside the frame", self.instance_id)));
            }
        }
        Ok(())
    }

    fn check_modes(&self, modes: PromptModes, adapter: &str) -> Result<()> {
        let missing = if !self.positive_points.is_empty() && !modes.points {
            Some("points")
        } else if self.bbox.is_some() && !modes.boxes {
            Some("box")
        } else if self.text.is_some() && !modes.text {
            Some("text")
        } else {
            None
        };
        match missing {
            Some(mode) => Err(Error::Capability(format!("segmenter `{adapter}` does not accept {mode} prompts"))),
            None => Ok(()),
        }
    }

    fn rescaled(&self, src: (usize, usize), dst: (usize, usize)) -> Result<Self> {
        let sy = dst.0 as f64 / src.0 as f64;
        let sx = dst.1 as f64 / src.1 as f64;
        Ok(Self {
            instance_id: self.instance_id,
            positive_points: rescale_points(&self.positive_points, src, dst)?,
            bbox: self.bbox.map(|b| b.scaled(sx, sy)),
            text: self.text.clone(),
        })
    }
}

/// Per-pixel foreground probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ProbMap {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        Self {
            height: mask.height(),
            width: mask.width(),
            data: mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn threshold(&self, t: f32) -> BinaryMask {
        BinaryMask::from_bits(self.height, self.width, self.data.iter().map(|&p| p >= t).collect())
            .expect("probability map dimensions are positive")
    }
}

pub trait SegmenterAdapter: Send {
    fn name(&self) -> &str;

    fn prompt_modes(&self) -> PromptModes;

    /// Fixed inference resolution `(height, width)`, if the model has one.
    fn native_input_hw(&self) -> Option<(usize, usize)> {
        None
    }

    /// One probability map per prompt, at the resolution of `image`, with
    /// prompts already expressed in `image` coordinates.
    fn predict(&mut self, image: &Frame, prompts: &[PromptBundle]) -> Result<Vec<ProbMap>>;

    /// Coarse foreground map for a free-text description.
    fn text_map(&mut self, _image: &Frame, _text: &str) -> Result<ProbMap> {
        Err(Error::Capability(format!("segmenter `{}` has no text mode", self.name())))
    }

    fn peak_memory_bytes(&self) -> Option<u64> {
        None
    }
}

fn backend_error(adapter: &str, e: Error) -> Error {
    match e {
        e @ (Error::SegmenterBackend { .. } | Error::Capability(_) | Error::InvalidArgument(_) | Error::EmptyRegion { .. }) => e,
        other => Error::SegmenterBackend {
            adapter: adapter.to_string(),
            message: other.to_string(),
        },
    }
}

/// Segment every bundle on `frame`; masks come back at frame resolution.
pub fn segment(adapter: &mut dyn SegmenterAdapter, frame: &Frame, prompts: &[PromptBundle]) -> Result<InstanceMaskSet> {
    let (h, w) = frame.hw();
    let modes = adapter.prompt_modes();
    for p in prompts {
        p.validate(h, w)?;
        p.check_modes(modes, adapter.name())?;
    }
    let mut out = InstanceMaskSet::new(frame.index, h, w);
    if prompts.is_empty() {
        return Ok(out);
    }
    let name = adapter.name().to_string();
    let native = adapter.native_input_hw();
    let maps = match native {
        Some(nhw) if nhw != (h, w) => {
            let image = frame.resized(nhw)?;
            let mapped = prompts.iter().map(|p| p.rescaled((h, w), nhw)).collect::<Result<Vec<_>>>()?;
            adapter.predict(&image, &mapped)
        }
        _ => adapter.predict(frame, prompts),
    }
    .map_err(|e| backend_error(&name, e))?;
    if maps.len() != prompts.len() {
        return Err(Error::SegmenterBackend {
            adapter: name,
            message: format!("{} maps for {} prompts", maps.len(), prompts.len()),
        });
    }
    let expected = native.unwrap_or((h, w));
    for (p, m) in prompts.iter().zip(maps) {
        if (m.height, m.width) != expected || m.data.len() != m.height * m.width {
            return Err(Error::SegmenterBackend {
                adapter: name,
                message: format!("map is {}x{}, expected {expected:?}", m.height, m.width),
            });
        }
        let mask = m.threshold(MASK_THRESHOLD).resized_nearest((h, w));
        out.insert(p.instance_id, mask)?;
    }
    Ok(out)
}

/// Initial instances from a text prompt: threshold the coarse map, split it
/// into connected components and keep those covering at least
/// [`TEXT_COMPONENT_FLOOR`] of the frame. Instances are numbered from 1.
pub fn init_mask_from_text(
    adapter: &mut dyn SegmenterAdapter,
    frame: &Frame,
    text: &str,
    threshold: f32,
) -> Result<InstanceMaskSet> {
    if !adapter.prompt_modes().text {
        return Err(Error::Capability(format!("segmenter `{}` does not accept text prompts", adapter.name())));
    }
    let (h, w) = frame.hw();
    let name = adapter.name().to_string();
    let map = match adapter.native_input_hw() {
        Some(nhw) if nhw != (h, w) => adapter.text_map(&frame.resized(nhw)?, text),
        _ => adapter.text_map(frame, text),
    }
    .map_err(|e| backend_error(&name, e))?;
    let coarse = map.threshold(threshold).resized_nearest((h, w));
    instances_from_coarse(&coarse, frame.index)
}

/// Connected components of a coarse foreground mask above the area floor.
pub fn instances_from_coarse(coarse: &BinaryMask, frame_index: u64) -> Result<InstanceMaskSet> {
    let (h, w) = coarse.hw();
    let floor = TEXT_COMPONENT_FLOOR * (h * w) as f64;
    let mut out = InstanceMaskSet::new(frame_index, h, w);
    let mut next = 1;
    for comp in coarse.components() {
        if comp.count() as f64 >= floor {
            out.insert(next, comp)?;
            next += 1;
        }
    }
    if out.is_empty() {
        return Err(Error::empty_region(
            None,
            "no text-prompted component covers the minimum area; fall back to manual prompts",
        ));
    }
    Ok(out)
}

/// One instance per box, numbered from 1 in box order.
pub fn init_mask_from_box(adapter: &mut dyn SegmenterAdapter, frame: &Frame, boxes: &[BoxPrompt]) -> Result<InstanceMaskSet> {
    let prompts: Vec<PromptBundle> = boxes
        .iter()
        .enumerate()
        .map(|(i, b)| PromptBundle::boxed(i as u32 + 1, *b))
        .collect();
    segment(adapter, frame, &prompts)
}

#[cfg(test)]
mod tests;
