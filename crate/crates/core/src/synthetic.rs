//! Deterministic synthetic videos with analytic ground truth.
//!
//! A scene is a smoothly textured dark background with bright textured disks
//! moving at constant velocity and optional dark occluder rectangles shown
//! over a frame interval. Disk texture is anchored to the disk, so motion is
//! rigid. Everything is a closed-form function of `(frame, row, col)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::Point;
use crate::mask::{BinaryMask, InstanceMaskSet};
use crate::trackers::MotionField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub instance_id: u32,
    /// Center at frame 0, as `[x, y]`.
    pub center: Point,
    pub radius: f64,
    /// Pixels per frame, as `[vx, vy]`.
    pub velocity: Point,
    /// First frame on which the disk exists.
    #[serde(default)]
    pub appears_at: u64,
    #[serde(default)]
    pub texture_phase: f64,
}

impl Disk {
    pub fn center_at(&self, t: u64) -> Point {
        let t = t as f64;
        Point::new(self.center.x + self.velocity.x * t, self.center.y + self.velocity.y * t)
    }

    pub fn present_at(&self, t: u64) -> bool {
        t >= self.appears_at
    }

    fn covers(&self, t: u64, p: Point) -> bool {
        self.present_at(t) && self.center_at(t).dist(&p) <= self.radius
    }
}

/// Dark rectangle hiding everything beneath it on frames `[from, until)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    /// `[x_min, y_min, x_max, y_max]`.
    pub rect: [f64; 4],
    pub from: u64,
    pub until: u64,
}

impl Occluder {
    fn covers(&self, t: u64, p: Point) -> bool {
        t >= self.from && t < self.until && p.x >= self.rect[0] && p.x < self.rect[2] && p.y >= self.rect[1] && p.y < self.rect[3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub frames: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub disks: Vec<Disk>,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
}

fn default_fps() -> f64 {
    25.0
}

fn background(r: f64, c: f64) -> f64 {
    50.0 + 18.0 * (0.21 * c + 0.5).sin() * (0.17 * r).cos() + 14.0 * (0.09 * (c + 2.0 * r)).sin() + 8.0 * (0.33 * r - 0.12 * c).cos()
}

fn disk_texture(u: f64, v: f64, phase: f64) -> f64 {
    205.0 + 22.0 * (0.31 * u + phase).sin() * (0.27 * v).cos() + 15.0 * (0.19 * (u - v) + 0.7 * phase).sin() + 8.0 * (0.45 * v + 0.2 * u).cos()
}

const OCCLUDER_GRAY: f64 = 30.0;

impl Scene {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scene: Scene = serde_json::from_str(&text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::invalid("scene dimensions must be positive"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::invalid("scene fps must be positive"));
        }
        Ok(())
    }

    /// A single disk moving at `velocity` px/frame.
    pub fn moving_disk(frames: u64, velocity: Point) -> Self {
        Scene {
            height: 200,
            width: 320,
            frames,
            fps: 25.0,
            disks: vec![Disk {
                instance_id: 1,
                center: Point::new(90.0, 90.0),
                radius: 30.0,
                velocity,
                appears_at: 0,
                texture_phase: 0.0,
            }],
            occluders: Vec::new(),
        }
    }

    /// The moving disk plus a second disk that appears at frame 30.
    pub fn two_objects(frames: u64) -> Self {
        let mut scene = Scene::moving_disk(frames, Point::new(1.0, 0.0));
        scene.disks.push(Disk {
            instance_id: 2,
            center: Point::new(250.0, 60.0),
            radius: 22.0,
            velocity: Point::new(-0.5, 1.0),
            appears_at: 30,
            texture_phase: 1.3,
        });
        scene
    }

    /// The moving disk fully hidden by an occluder on frames 30..38.
    pub fn occluded_disk(frames: u64) -> Self {
        let mut scene = Scene::moving_disk(frames, Point::new(1.5, 0.0));
        scene.occluders.push(Occluder {
            rect: [100.0, 40.0, 230.0, 150.0],
            from: 30,
            until: 38,
        });
        scene
    }

    pub fn timestamp_ms(&self, t: u64) -> f64 {
        t as f64 * 1000.0 / self.fps
    }

    /// Topmost visible thing at pixel center `p`: `Some(disk index)` or `None` for background/occluder.
    fn visible_disk(&self, t: u64, p: Point) -> Option<usize> {
        if self.occluders.iter().any(|o| o.covers(t, p)) {
            return None;
        }
        // later disks are drawn on top
        self.disks.iter().rposition(|d| d.covers(t, p))
    }

    pub fn render(&self, t: u64) -> Frame {
        let (h, w) = (self.height, self.width);
        let mut gray = vec![0u8; h * w];
        for r in 0..h {
            for c in 0..w {
                let p = Point::pixel_center(r, c);
                let v = if self.occluders.iter().any(|o| o.covers(t, p)) {
                    OCCLUDER_GRAY
                } else if let Some(i) = self.visible_disk(t, p) {
                    let d = &self.disks[i];
                    let ctr = d.center_at(t);
                    disk_texture(p.x - ctr.x, p.y - ctr.y, d.texture_phase)
                } else {
                    background(r as f64, c as f64)
                };
                gray[r * w + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
        Frame::from_gray(t, h, w, &gray)
            .expect("scene dimensions are positive")
            .with_index(t, self.timestamp_ms(t))
    }

    /// Visible-region ground truth for every disk that exists at `t`.
    pub fn ground_truth(&self, t: u64) -> InstanceMaskSet {
        let mut set = InstanceMaskSet::new(t, self.height, self.width);
        for (i, d) in self.disks.iter().enumerate() {
            if !d.present_at(t) {
                continue;
            }
            let m = BinaryMask::from_fn(self.height, self.width, |r, c| {
                self.visible_disk(t, Point::pixel_center(r, c)) == Some(i)
            });
            set.insert(d.instance_id, m).expect("ids are unique per scene");
        }
        set
    }

    pub fn disk(&self, instance_id: u32) -> Option<&Disk> {
        self.disks.iter().find(|d| d.instance_id == instance_id)
    }

    pub fn into_motion_field(self) -> Arc<dyn MotionField> {
        Arc::new(self)
    }
}

impl MotionField for Scene {
    /// A point born at `birth` follows the topmost disk geometrically under
    /// it at birth (occluded or not), else stays put on the background.
    /// It is visible when inside the frame, not under an occluder, and not
    /// hidden beneath another disk drawn on top.
    fn trajectory(&self, p: Point, birth: u64, t: u64) -> (Point, bool) {
        let owner = self.disks.iter().rposition(|d| d.covers(birth, p));
        let pos = match owner {
            Some(i) => {
                let d = &self.disks[i];
                let (a, b) = (d.center_at(birth), d.center_at(t));
                Point::new(p.x + b.x - a.x, p.y + b.y - a.y)
            }
            None => p,
        };
        let in_frame = pos.in_bounds(self.height, self.width);
        let occluded = self.occluders.iter().any(|o| o.covers(t, pos));
        let hidden = match owner {
            Some(i) => self.disks[i + 1..].iter().any(|d| d.covers(t, pos)),
            None => self.disks.iter().any(|d| d.covers(t, pos)),
        };
        (pos, in_frame && !occluded && !hidden)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_is_bright_and_background_dark() {
        let s = Scene::moving_disk(3, Point::new(2.0, 0.0));
        let f = s.render(0);
        let gray = f.gray_plane();
        let gt = s.ground_truth(0);
        let m = gt.get(1).unwrap();
        for (i, g) in gray.iter().enumerate() {
            let inside = m.bits()[i];
            assert_eq!(*g >= 128.0, inside, "pixel {i} gray {g}");
        }
        assert!(m.count() > 2500);
    }

    #[test]
    fn occluder_hides_disk() {
        let mut s = Scene::moving_disk(10, Point::new(1.0, 0.0));
        s.occluders.push(Occluder {
            rect: [0.0, 0.0, 320.0, 200.0],
            from: 3,
            until: 5,
        });
        assert!(s.ground_truth(3).get(1).unwrap().is_empty());
        assert!(!s.ground_truth(5).get(1).unwrap().is_empty());
        let (_, vis) = s.trajectory(Point::new(90.0, 90.0), 0, 4);
        assert!(!vis);
        let (p, vis) = s.trajectory(Point::new(90.0, 90.0), 0, 5);
        assert!(vis);
        assert_eq!(p, Point::new(95.0, 90.0));
    }
}
