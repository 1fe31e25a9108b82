//! Frame-to-frame normalized cross-correlation template tracker.

use serde::{Deserialize, Serialize};

use super::{TrackerAdapter, TrackerCapabilities};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::Point;
use crate::points::{QueryPointSet, TrackedPointSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NccConfig {
    pub patch_radius: usize,
    pub search_radius: usize,
    /// Peaks below this correlation mark the point as not visible.
    pub min_correlation: f64,
}

impl Default for NccConfig {
    fn default() -> Self {
        Self {
            patch_radius: 10,
            search_radius: 16,
            min_correlation: 0.5,
        }
    }
}

struct PointTrack {
    pos: Point,
    velocity: Point,
    /// Patch at the query position. Matching against it first keeps
    /// rigidly moving points from drifting.
    anchor: Option<Vec<f64>>,
    /// Patch at the last visible position, used when the anchor no longer matches.
    template: Option<Vec<f64>>,
}

struct InstanceTrack {
    instance_id: u32,
    points: Vec<PointTrack>,
}

/// Grayscale plane with bilinear sampling at continuous coordinates
/// (pixel centers at `+0.5`, edges replicated).
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    fn new(frame: &Frame) -> Self {
        Self {
            h: frame.height(),
            w: frame.width(),
            data: frame.gray_plane().into_iter().map(f64::from).collect(),
        }
    }

    fn px(&self, r: isize, c: isize) -> f64 {
        let r = r.clamp(0, self.h as isize - 1) as usize;
        let c = c.clamp(0, self.w as isize - 1) as usize;
        self.data[r * self.w + c]
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x - 0.5, y - 0.5);
        let (c0, r0) = (u.floor(), v.floor());
        let (fx, fy) = (u - c0, v - r0);
        let (c0, r0) = (c0 as isize, r0 as isize);
        let top = self.px(r0, c0) * (1.0 - fx) + self.px(r0, c0 + 1) * fx;
        let bot = self.px(r0 + 1, c0) * (1.0 - fx) + self.px(r0 + 1, c0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    /// Square grid of `side x side` samples with unit spacing, first sample at `origin`.
    fn grid(&self, origin: Point, side: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                out.push(self.sample(origin.x + j as f64, origin.y + i as f64));
            }
        }
        out
    }
}

fn patch_inside(p: Point, radius: usize, h: usize, w: usize) -> bool {
    let r = radius as f64;
    p.x - r >= 0.5 && p.y - r >= 0.5 && p.x + r <= w as f64 - 0.5 && p.y + r <= h as f64 - 0.5
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut ss = 0.0;
    for x in v.iter_mut() {
        *x -= mean;
        ss += *x * *x;
    }
    if ss < 1e-9 {
        return None;
    }
    let norm = ss.sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub struct NccTracker {
    cfg: NccConfig,
    tracks: Vec<InstanceTrack>,
}

impl NccTracker {
    pub fn new(cfg: NccConfig) -> Self {
        Self { cfg, tracks: Vec::new() }
    }

    fn side(&self) -> usize {
        2 * self.cfg.patch_radius + 1
    }

    fn template_at(&self, plane: &Plane, p: Point) -> Option<Vec<f64>> {
        let pr = self.cfg.patch_radius as f64;
        normalize(plane.grid(Point::new(p.x - pr, p.y - pr), self.side()))
    }

    fn register(&mut self, frame: &Frame, queries: &[QueryPointSet]) {
        let plane = Plane::new(frame);
        for q in queries {
            let points = q
                .points
                .iter()
                .map(|&p| {
                    let patch = self.template_at(&plane, p);
                    PointTrack {
                        pos: p,
                        velocity: Point::new(0.0, 0.0),
                        anchor: patch.clone(),
                        template: patch,
                    }
                })
                .collect();
            self.tracks.push(InstanceTrack {
                instance_id: q.instance_id,
                points,
            });
        }
    }

    fn score_at(&self, plane: &Plane, template: &[f64], p: Point) -> f64 {
        match self.template_at(plane, p) {
            Some(w) => w.iter().zip(template).map(|(a, b)| a * b).sum(),
            None => 0.0,
        }
    }

    /// Integer search around `center`, then coarse-to-fine sub-pixel
    /// refinement. Returns the position and its correlation.
    fn search(&self, plane: &Plane, template: &[f64], center: Point) -> (Point, f64) {
        let (pr, sr) = (self.cfg.patch_radius, self.cfg.search_radius);
        let side = self.side();
        let span = 2 * sr + 1;
        let reach = (sr + pr) as f64;
        let region_side = span + side - 1;
        let region = plane.grid(Point::new(center.x - reach, center.y - reach), region_side);

        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        let mut win = Vec::with_capacity(side * side);
        for dy in 0..span {
            for dx in 0..span {
                win.clear();
                for i in 0..side {
                    let row = (dy + i) * region_side + dx;
                    win.extend_from_slice(&region[row..row + side]);
                }
                let s = match normalize(win.clone()) {
                    Some(w) => w.iter().zip(template).map(|(a, b)| a * b).sum(),
                    None => 0.0,
                };
                if s > best.2 {
                    best = (dy, dx, s);
                }
            }
        }
        let mut pos = Point::new(center.x + best.1 as f64 - sr as f64, center.y + best.0 as f64 - sr as f64);
        let mut peak = best.2;
        let mut step = 0.5;
        while step >= 1.0 / 64.0 {
            let origin = pos;
            for (ox, oy) in [(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                let cand = Point::new(origin.x + ox * step, origin.y + oy * step);
                let s = self.score_at(plane, template, cand);
                if s > peak {
                    peak = s;
                    pos = cand;
                }
            }
            step /= 2.0;
        }
        (pos, peak)
    }
}

impl TrackerAdapter for NccTracker {
    fn name(&self) -> &str {
        "ncc"
    }

    fn capabilities(&self) -> TrackerCapabilities {
        TrackerCapabilities {
            supports_visibility: true,
            supports_midstream_queries: true,
        }
    }

    fn init(&mut self, first_frame: &Frame, queries: &[QueryPointSet], _window_size: usize) -> Result<()> {
        if self.cfg.patch_radius == 0 || self.cfg.search_radius == 0 {
            return Err(Error::invalid("ncc patch and search radii must be positive"));
        }
        self.tracks.clear();
        self.register(first_frame, queries);
        Ok(())
    }

    fn step(&mut self, window: &[Frame]) -> Result<Vec<TrackedPointSet>> {
        let frame = window.last().ok_or_else(|| Error::invalid("empty frame window"))?;
        let plane = Plane::new(frame);
        let (h, w) = frame.hw();
        let mut tracks = std::mem::take(&mut self.tracks);
        let mut out = Vec::with_capacity(tracks.len());
        for inst in tracks.iter_mut() {
            let mut points = Vec::with_capacity(inst.points.len());
            let mut visible = Vec::with_capacity(inst.points.len());
            for pt in inst.points.iter_mut() {
                let predicted = Point::new(pt.pos.x + pt.velocity.x, pt.pos.y + pt.velocity.y);
                if !predicted.in_bounds(h, w) {
                    // constant-velocity exit: coast without searching
                    pt.pos = predicted;
                    points.push(pt.pos);
                    visible.push(false);
                    continue;
                }
                let mut hit = match &pt.anchor {
                    Some(a) => self.search(&plane, a, predicted),
                    None => (predicted, 0.0),
                };
                if hit.1 < self.cfg.min_correlation {
                    if let Some(t) = &pt.template {
                        let alt = self.search(&plane, t, predicted);
                        if alt.1 > hit.1 {
                            hit = alt;
                        }
                    }
                }
                let (found, peak) = hit;
                let matched = peak >= self.cfg.min_correlation;
                let vis = matched && found.in_bounds(h, w);
                if vis {
                    pt.velocity = Point::new(found.x - pt.pos.x, found.y - pt.pos.y);
                    pt.pos = found;
                    if patch_inside(found, self.cfg.patch_radius, h, w) {
                        pt.template = self.template_at(&plane, found);
                    }
                } else {
                    // keep coasting on the last good velocity
                    pt.pos = predicted;
                }
                points.push(pt.pos);
                visible.push(vis);
            }
            out.push(TrackedPointSet {
                instance_id: inst.instance_id,
                frame_index: frame.index,
                points,
                visible,
            });
        }
        self.tracks = tracks;
        Ok(out)
    }

    fn add_queries(&mut self, queries: &[QueryPointSet], at_frame: &Frame) -> Result<()> {
        self.register(at_frame, queries);
        Ok(())
    }

    fn drop_instances(&mut self, ids: &[u32]) -> Result<()> {
        self.tracks.retain(|t| !ids.contains(&t.instance_id));
        Ok(())
    }
}
