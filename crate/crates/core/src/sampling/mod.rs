//! Query-point selection inside first-frame regions of interest.

mod corners;
mod kmedoids;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use corners::{corner_candidates, min_eigen_map};
pub use kmedoids::{kmedoids, medoid_cost, pam, PamResult, MAX_PAM_POINTS};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::Point;
use crate::mask::{BinaryMask, InstanceMaskSet};
use crate::points::QueryPointSet;

pub const MIN_POINTS_PER_INSTANCE: usize = 1;
pub const MAX_POINTS_PER_INSTANCE: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Grid,
    ShiTomasi,
    Kmedoids,
    Manual,
}

/// User-chosen points for one instance (manual strategy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualPoints {
    pub instance_id: u32,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingStrategy {
    #[serde(rename = "strategy")]
    pub kind: StrategyKind,
    #[serde(default = "default_points")]
    pub points_per_instance: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manual: Vec<ManualPoints>,
}

fn default_points() -> usize {
    5
}

impl Default for SamplingStrategy {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Kmedoids,
            points_per_instance: default_points(),
            seed: 0,
            manual: Vec::new(),
        }
    }
}

impl SamplingStrategy {
    pub fn new(kind: StrategyKind, points_per_instance: usize, seed: u64) -> Result<Self> {
        let s = Self {
            kind,
            points_per_instance,
            seed,
            manual: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_POINTS_PER_INSTANCE..=MAX_POINTS_PER_INSTANCE).contains(&self.points_per_instance) {
            return Err(Error::config(
                "sampling.points_per_instance",
                format!(
                    "must be in [{MIN_POINTS_PER_INSTANCE}, {MAX_POINTS_PER_INSTANCE}], got {}",
                    self.points_per_instance
                ),
            ));
        }
        Ok(())
    }

    /// Seed for one instance, so instances draw independent streams.
    pub fn instance_seed(&self, instance_id: u32) -> u64 {
        self.seed ^ (instance_id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

fn require_nonempty(mask: &BinaryMask) -> Result<Vec<Point>> {
    let centers = mask.pixel_centers();
    if centers.is_empty() {
        return Err(Error::empty_region(None, "mask has no set pixels"));
    }
    Ok(centers)
}

/// Repeat `points` cyclically until there are `k` of them.
fn cycle_to(points: Vec<Point>, k: usize) -> Vec<Point> {
    if points.len() >= k || points.is_empty() {
        return points.into_iter().take(k).collect();
    }
    points.iter().cycle().take(k).copied().collect()
}

/// `k` uniform draws over set-pixel centers; without replacement when there
/// are at least `k` set pixels.
pub fn sample_random(mask: &BinaryMask, k: usize, seed: u64) -> Result<Vec<Point>> {
    let centers = require_nonempty(mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if centers.len() >= k {
        Ok(rand::seq::index::sample(&mut rng, centers.len(), k)
            .into_iter()
            .map(|i| centers[i])
            .collect())
    } else {
        Ok((0..k).map(|_| centers[rng.gen_range(0..centers.len())]).collect())
    }
}

/// Square lattice over the mask's bounding box.
///
/// Stride `s = max(1, floor(sqrt(bbox_area / k)))`, lattice points at
/// `bbox_origin + s/2 + i*s`. Points falling in set cells survive; with too
/// few survivors the stride is halved down to 1. Among more than `k`
/// survivors the `k` nearest the bbox center are kept, emitted in row-major
/// order. A region with fewer than `k` pixels repeats its points cyclically.
pub fn sample_grid(mask: &BinaryMask, k: usize) -> Result<Vec<Point>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let (r0, c0, r1, c1) = mask
        .bbox()
        .ok_or_else(|| Error::empty_region(None, "mask has no set pixels"))?;
    let (bh, bw) = ((r1 - r0 + 1) as f64, (c1 - c0 + 1) as f64);
    let center = Point::new(c0 as f64 + bw / 2.0, r0 as f64 + bh / 2.0);
    let mut stride = ((bh * bw / k as f64).sqrt().floor() as usize).max(1);
    loop {
        let s = stride as f64;
        let mut survivors = Vec::new();
        let mut y = r0 as f64 + s / 2.0;
        while y < (r1 + 1) as f64 {
            let mut x = c0 as f64 + s / 2.0;
            while x < (c1 + 1) as f64 {
                let p = Point::new(x, y);
                if mask.contains_point(&p) {
                    survivors.push(p);
                }
                x += s;
            }
            y += s;
        }
        if survivors.len() >= k {
            let mut order: Vec<usize> = (0..survivors.len()).collect();
            order.sort_by(|&a, &b| survivors[a].dist(&center).total_cmp(&survivors[b].dist(&center)).then(a.cmp(&b)));
            let mut keep: Vec<usize> = order.into_iter().take(k).collect();
            keep.sort_unstable();
            return Ok(keep.into_iter().map(|i| survivors[i]).collect());
        }
        if stride == 1 {
            return Ok(cycle_to(survivors, k));
        }
        stride = (stride / 2).max(1);
    }
}

/// Best `k` Shi-Tomasi corners in the mask, padded with k-medoids when too few qualify.
pub fn shi_tomasi_corners(frame: &Frame, mask: &BinaryMask, k: usize, seed: u64) -> Result<Vec<Point>> {
    if mask.hw() != frame.hw() {
        return Err(Error::invalid("mask and frame dimensions differ"));
    }
    let centers = require_nonempty(mask)?;
    let mut picked = corner_candidates(frame, mask, k);
    if picked.len() < k {
        let missing = k - picked.len();
        picked.extend(kmedoids_padded(&centers, missing, seed)?);
    }
    Ok(picked)
}

/// k-medoids that tolerates regions with fewer than `k` pixels.
fn kmedoids_padded(centers: &[Point], k: usize, seed: u64) -> Result<Vec<Point>> {
    if centers.len() <= k {
        return Ok(cycle_to(centers.to_vec(), k));
    }
    kmedoids(centers, k, seed)
}

/// One point set per instance in `masks`, all born at `frame.index`.
pub fn sample_query_points(
    frame: &Frame,
    masks: &InstanceMaskSet,
    strategy: &SamplingStrategy,
) -> Result<Vec<QueryPointSet>> {
    strategy.validate()?;
    let k = strategy.points_per_instance;
    if strategy.kind == StrategyKind::Manual {
        return strategy
            .manual
            .iter()
            .map(|m| {
                let q = QueryPointSet::new(m.instance_id, m.points.clone(), frame.index);
                q.validate(frame.height(), frame.width())?;
                Ok(q)
            })
            .collect();
    }
    if masks.hw() != frame.hw() {
        return Err(Error::invalid("instance masks and frame dimensions differ"));
    }
    let mut out = Vec::with_capacity(masks.len());
    for (id, mask) in masks.iter() {
        let points = sample_instance(frame, mask, strategy.kind, k, strategy.instance_seed(id)).map_err(|e| match e {
            Error::EmptyRegion { message, .. } => Error::empty_region(Some(id), message),
            e => e,
        })?;
        out.push(QueryPointSet::new(id, points, frame.index));
    }
    Ok(out)
}

/// Sample `k` points in a single mask with a non-manual strategy.
pub fn sample_instance(frame: &Frame, mask: &BinaryMask, kind: StrategyKind, k: usize, seed: u64) -> Result<Vec<Point>> {
    match kind {
        StrategyKind::Random => sample_random(mask, k, seed),
        StrategyKind::Grid => sample_grid(mask, k),
        StrategyKind::ShiTomasi => shi_tomasi_corners(frame, mask, k, seed),
        StrategyKind::Kmedoids | StrategyKind::Manual => kmedoids_padded(&require_nonempty(mask)?, k, seed),
    }
}
