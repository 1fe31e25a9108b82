//! Shi-Tomasi corner scoring restricted to a mask.

use crate::frame::Frame;
use crate::geometry::Point;
use crate::mask::BinaryMask;

pub const NMS_RADIUS: f64 = 5.0;
pub const QUALITY_FLOOR: f64 = 0.01;

/// Minimum eigenvalue of the structure tensor for every pixel.
///
/// Gradients are 3x3 Sobel responses on luma; the tensor sums their outer
/// products over the 3x3 neighbourhood. Borders replicate edge pixels.
pub fn min_eigen_map(frame: &Frame) -> Vec<f64> {
    let (h, w) = frame.hw();
    let gray: Vec<f64> = frame.gray_plane().into_iter().map(f64::from).collect();
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        gray[r * w + c]
    };
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            gx[i] = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            gy[i] = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let rr = (r + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (c + dc).clamp(0, w as isize - 1) as usize;
                    let (x, y) = (gx[rr * w + cc], gy[rr * w + cc]);
                    a += x * x;
                    b += x * y;
                    d += y * y;
                }
            }
            let half_tr = 0.5 * (a + d);
            let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            out[r as usize * w + c as usize] = (half_tr - disc).max(0.0);
        }
    }
    out
}

/// Up to `k` corner pixels inside `mask`, best first, after suppression.
/// Fewer are returned when not enough clear the quality floor.
pub fn corner_candidates(frame: &Frame, mask: &BinaryMask, k: usize) -> Vec<Point> {
    let w = frame.width();
    let scores = min_eigen_map(frame);
    let mut cand: Vec<(usize, f64)> = mask.cells().map(|(r, c)| (r * w + c, scores[r * w + c])).collect();
    let max = cand.iter().map(|c| c.1).fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    cand.retain(|c| c.1 > 0.0 && c.1 >= QUALITY_FLOOR * max);
    // stable: equal scores keep row-major order
    cand.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut picked: Vec<Point> = Vec::with_capacity(k);
    for (i, _) in cand {
        if picked.len() == k {
            break;
        }
        let p = Point::pixel_center(i / w, i % w);
        if picked.iter().all(|q| q.dist(&p) > NMS_RADIUS) {
            picked.push(p);
        }
    }
    picked
}
