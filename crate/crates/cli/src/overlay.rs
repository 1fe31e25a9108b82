use image::{Rgb, RgbImage};
use tapseg_core::maskio::instance_color;
use tapseg_core::pipeline::FrameResult;
use tapseg_core::Frame;

const MASK_ALPHA: f32 = 0.45;

/// The frame with each instance's mask tinted in its color and its visible
/// tracked points marked as small crosses.
pub fn render(frame: &Frame, result: &FrameResult) -> RgbImage {
    let mut img = frame.to_rgb_image();
    for (id, mask) in result.masks.iter() {
        let color = instance_color(id);
        for (r, c) in mask.cells() {
            let px = img.get_pixel_mut(c as u32, r as u32);
            for k in 0..3 {
                px[k] = ((1.0 - MASK_ALPHA) * px[k] as f32 + MASK_ALPHA * color[k] as f32).round() as u8;
            }
        }
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    for set in &result.tracked {
        let color = Rgb(instance_color(set.instance_id));
        for (p, &vis) in set.points.iter().zip(&set.visible) {
            if !vis {
                continue;
            }
            let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
            for d in -2..=2i64 {
                for (x, y) in [(cx + d, cy), (cx, cy + d)] {
                    if (0..w).contains(&x) && (0..h).contains(&y) {
                        img.put_pixel(x as u32, y as u32, if d == 0 { Rgb([255, 255, 255]) } else { color });
                    }
                }
            }
        }
    }
    img
}
