//! Continuous image coordinates.
//!
//! `x` is the column and `y` the row, both in pixels, with the origin at the
//! top-left corner of pixel `(0, 0)`. A continuous point `(x, y)` belongs to
//! the cell `(floor(y), floor(x))`, and pixel `(r, c)` is represented by its
//! center `(c + 0.5, r + 0.5)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of the pixel at row `r`, column `c`.
    pub fn pixel_center(r: usize, c: usize) -> Self {
        Self::new(c as f64 + 0.5, r as f64 + 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// The `(row, col)` cell containing this point, if it lies inside an
    /// `height x width` grid.
    pub fn cell(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        if !self.is_finite() || self.x < 0.0 || self.y < 0.0 {
            return None;
        }
        let (r, c) = (self.y.floor() as usize, self.x.floor() as usize);
        (r < height && c < width).then_some((r, c))
    }

    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.cell(height, width).is_some()
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoxPrompt {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoxPrompt {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("box coordinates must be finite"));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::invalid(format!(
                "degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(b)
    }

    pub fn intersects_frame(&self, height: usize, width: usize) -> bool {
        self.x_max > 0.0 && self.y_max > 0.0 && self.x_min < width as f64 && self.y_min < height as f64
    }

    /// Whether the center of pixel `(r, c)` lies inside the box.
    pub fn contains_pixel(&self, r: usize, c: usize) -> bool {
        let p = Point::pixel_center(r, c);
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> Self {
        Self {
            x_min: self.x_min * sx,
            y_min: self.y_min * sy,
            x_max: self.x_max * sx,
            y_max: self.y_max * sy,
        }
    }
}

impl TryFrom<[f64; 4]> for BoxPrompt {
    type Error = Error;

    fn try_from([a, b, c, d]: [f64; 4]) -> Result<Self> {
        BoxPrompt::new(a, b, c, d)
    }
}

impl From<BoxPrompt> for [f64; 4] {
    fn from(b: BoxPrompt) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Map points between two image resolutions given as `(height, width)`.
pub fn rescale_points(points: &[Point], src_hw: (usize, usize), dst_hw: (usize, usize)) -> Result<Vec<Point>> {
    if src_hw.0 == 0 || src_hw.1 == 0 || dst_hw.0 == 0 || dst_hw.1 == 0 {
        return Err(Error::invalid(format!(
            "rescale dimensions must be positive, got {src_hw:?} -> {dst_hw:?}"
        )));
    }
    let sy = dst_hw.0 as f64 / src_hw.0 as f64;
    let sx = dst_hw.1 as f64 / src_hw.1 as f64;
    Ok(points.iter().map(|p| Point::new(p.x * sx, p.y * sy)).collect())
}
