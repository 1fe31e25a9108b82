use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Query points issued for one instance at `birth_frame`. Point order is the
/// point identity for the rest of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPointSet {
    pub instance_id: u32,
    pub points: Vec<Point>,
    pub birth_frame: u64,
}

impl QueryPointSet {
    pub fn new(instance_id: u32, points: Vec<Point>, birth_frame: u64) -> Self {
        Self {
            instance_id,
            points,
            birth_frame,
        }
    }

    /// Check non-emptiness and that every point lies inside an `height x width` frame.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid(format!("instance {} has no query points", self.instance_id)));
        }
        if let Some(p) = self.points.iter().find(|p| !p.in_bounds(height, width)) {
            return Err(Error::invalid(format!(
                "query point ({}, {}) of instance {} lies outside the {height}x{width} frame",
                p.x, p.y, self.instance_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedPointSet {
    pub instance_id: u32,
    pub frame_index: u64,
    pub points: Vec<Point>,
    pub visible: Vec<bool>,
}

impl TrackedPointSet {
    pub fn all_visible(instance_id: u32, frame_index: u64, points: Vec<Point>) -> Self {
        let visible = vec![true; points.len()];
        Self {
            instance_id,
            frame_index,
            points,
            visible,
        }
    }

    pub fn visible_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.points
            .iter()
            .zip(&self.visible)
            .filter(|(_, &v)| v)
            .map(|(p, _)| *p)
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// Structural invariants: equal lengths, finite positions, and visible
    /// points inside the frame.
    pub fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.points.len() != self.visible.len() {
            return Err(Error::invalid("tracked points and visibility flags differ in length"));
        }
        for (p, &v) in self.points.iter().zip(&self.visible) {
            if !p.is_finite() {
                return Err(Error::invalid("non-finite tracked position"));
            }
            if v && !p.in_bounds(height, width) {
                return Err(Error::invalid(format!("visible point ({}, {}) lies outside the frame", p.x, p.y)));
            }
        }
        Ok(())
    }
}
