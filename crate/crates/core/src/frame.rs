use std::path::Path;
use std::sync::Arc;

use image::{imageops, RgbImage};

use crate::error::{Error, Result};

/// One timestamped RGB video frame. Pixel storage is shared, so clones are cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub timestamp_ms: f64,
    height: usize,
    width: usize,
    pixels: Arc<[u8]>,
}

impl Frame {
    /// Build a frame from interleaved RGB samples in row-major order.
    pub fn new(index: u64, timestamp_ms: f64, height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("frame dimensions must be positive, got {height}x{width}")));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::invalid(format!(
                "pixel buffer has {} bytes, expected {} for {height}x{width}x3",
                pixels.len(),
                height * width * 3
            )));
        }
        if !(timestamp_ms.is_finite() && timestamp_ms >= 0.0) {
            return Err(Error::invalid("timestamp must be a non-negative finite number"));
        }
        Ok(Self {
            index,
            timestamp_ms,
            height,
            width,
            pixels: pixels.into(),
        })
    }

    pub fn from_gray(index: u64, height: usize, width: usize, gray: &[u8]) -> Result<Self> {
        let pixels = gray.iter().flat_map(|&g| [g, g, g]).collect();
        Self::new(index, 0.0, height, width, pixels)
    }

    pub fn from_rgb_image(index: u64, timestamp_ms: f64, img: &RgbImage) -> Result<Self> {
        Self::new(
            index,
            timestamp_ms,
            img.height() as usize,
            img.width() as usize,
            img.as_raw().clone(),
        )
    }

    pub fn load_png(index: u64, timestamp_ms: f64, path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Self::from_rgb_image(index, timestamp_ms, &img)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, r: usize, c: usize) -> [u8; 3] {
        let i = (r * self.width + c) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Luma (BT.601 weights) of pixel `(r, c)` in `[0, 255]`.
    pub fn gray(&self, r: usize, c: usize) -> f32 {
        let [red, g, b] = self.rgb(r, c);
        0.299 * red as f32 + 0.587 * g as f32 + 0.114 * b as f32
    }

    /// Whole-frame luma plane, row-major.
    pub fn gray_plane(&self) -> Vec<f32> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect()
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.to_vec())
            .expect("frame buffer length is validated at construction")
    }

    /// Bilinear resize to `(height, width)`, keeping index and timestamp.
    pub fn resized(&self, hw: (usize, usize)) -> Result<Frame> {
        if hw == self.hw() {
            return Ok(self.clone());
        }
        if hw.0 == 0 || hw.1 == 0 {
            return Err(Error::invalid("resize target must be positive"));
        }
        let img = imageops::resize(
            &self.to_rgb_image(),
            hw.1 as u32,
            hw.0 as u32,
            imageops::FilterType::Triangle,
        );
        Frame::from_rgb_image(self.index, self.timestamp_ms, &img)
    }

    pub fn with_index(mut self, index: u64, timestamp_ms: f64) -> Self {
        self.index = index;
        self.timestamp_ms = timestamp_ms;
        self
    }
}
