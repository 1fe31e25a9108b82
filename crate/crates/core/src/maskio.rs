//! PNG mask files: binary (any non-zero pixel is foreground) or paletted
//! (one color per instance).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, InstanceMaskSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskEncoding {
    /// Instance 1 is every non-zero pixel.
    Binary,
    /// Indexed PNGs: palette index `i > 0` is instance `i`. Truecolor and
    /// gray PNGs: each distinct non-zero color is an instance, numbered
    /// from 1 in ascending color order.
    Paletted,
}

struct Decoded {
    height: usize,
    width: usize,
    /// One label key per pixel; 0 is background.
    keys: Vec<u32>,
    indexed: bool,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::STRIP_16);
    let bad = |e: png::DecodingError| Error::invalid(format!("cannot decode mask {}: {e}", path.display()));
    let mut reader = decoder.read_info().map_err(bad)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::invalid(format!("mask {} is too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let (h, w) = (info.height as usize, info.width as usize);
    let bits = match info.bit_depth {
        png::BitDepth::One => 1,
        png::BitDepth::Two => 2,
        png::BitDepth::Four => 4,
        _ => 8,
    };
    let channels = info.color_type.samples();
    let mut keys = Vec::with_capacity(h * w);
    for r in 0..h {
        let line = &buf[r * info.line_size..(r + 1) * info.line_size];
        for c in 0..w {
            let key = if bits < 8 {
                let bit = c * bits;
                let byte = line[bit / 8];
                let shift = 8 - bits - (bit % 8);
                ((byte >> shift) & ((1u8 << bits) - 1)) as u32
            } else {
                let px = &line[c * channels..(c + 1) * channels];
                // drop alpha; pack the color into one key
                let color = match channels {
                    2 => &px[..1],
                    4 => &px[..3],
                    _ => px,
                };
                color.iter().fold(0u32, |acc, &v| (acc << 8) | v as u32)
            };
            keys.push(key);
        }
    }
    Ok(Decoded {
        height: h,
        width: w,
        keys,
        indexed: info.color_type == png::ColorType::Indexed,
    })
}

/// Load a mask PNG as an instance set for `frame_index`.
pub fn load_mask_png(path: &Path, encoding: MaskEncoding, frame_index: u64) -> Result<InstanceMaskSet> {
    let d = decode(path)?;
    let mut set = InstanceMaskSet::new(frame_index, d.height, d.width);
    match encoding {
        MaskEncoding::Binary => {
            let m = BinaryMask::from_bits(d.height, d.width, d.keys.iter().map(|&k| k != 0).collect())?;
            set.insert(1, m)?;
        }
        MaskEncoding::Paletted => {
            let mut ids: BTreeMap<u32, u32> = BTreeMap::new();
            for &k in d.keys.iter().filter(|&&k| k != 0) {
                ids.entry(k).or_insert(0);
            }
            for (n, (key, id)) in ids.iter_mut().enumerate() {
                *id = if d.indexed { *key } else { n as u32 + 1 };
            }
            for (&key, &id) in &ids {
                let m = BinaryMask::from_bits(d.height, d.width, d.keys.iter().map(|&k| k == key).collect())?;
                set.insert(id, m)?;
            }
        }
    }
    Ok(set)
}

/// Distinct colors for instance ids, stable across frames.
pub fn instance_color(id: u32) -> [u8; 3] {
    // golden-angle hue walk, full saturation
    let h = (id as f64 * 137.508).rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

/// Write an 8-bit indexed PNG where palette index `i` is instance `i`.
/// Overlapping instances resolve to the highest id.
pub fn save_paletted_png(set: &InstanceMaskSet, path: &Path) -> Result<()> {
    let (h, w) = set.hw();
    let max_id = set.ids().max().unwrap_or(0);
    if max_id > 255 {
        return Err(Error::invalid("paletted masks hold at most 255 instances"));
    }
    let mut data = vec![0u8; h * w];
    for (id, m) in set.iter() {
        for (i, &b) in m.bits().iter().enumerate() {
            if b {
                data[i] = id as u8;
            }
        }
    }
    let mut palette = vec![0u8; 3];
    for id in 1..=max_id {
        palette.extend_from_slice(&instance_color(id));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(palette);
    let io = |e: png::EncodingError| Error::invalid(format!("cannot write {}: {e}", path.display()));
    let mut writer = enc.write_header().map_err(io)?;
    writer.write_image_data(&data).map_err(io)?;
    writer.finish().map_err(io)
}

/// Write a binary mask as an 8-bit gray PNG (0 / 255).
pub fn save_binary_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let data: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data)
        .expect("buffer matches dimensions")
        .save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_instances() -> InstanceMaskSet {
        let mut set = InstanceMaskSet::new(0, 6, 8);
        set.insert(1, BinaryMask::from_fn(6, 8, |r, c| r < 2 && c < 3)).unwrap();
        set.insert(2, BinaryMask::from_fn(6, 8, |r, c| r >= 4 && c >= 5)).unwrap();
        set
    }

    #[test]
    fn paletted_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let set = two_instances();
        save_paletted_png(&set, &p).unwrap();
        let back = load_mask_png(&p, MaskEncoding::Paletted, 0).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn binary_png_is_one_instance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.png");
        let set = two_instances();
        save_binary_png(&set.union(), &p).unwrap();
        let back = load_mask_png(&p, MaskEncoding::Binary, 3).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back.get(1).unwrap(), &set.union());
        assert_eq!(back.frame_index, 3);
    }

    #[test]
    fn rgb_colors_become_instances() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.png");
        let mut img = image::RgbImage::new(4, 2);
        img.put_pixel(0, 0, image::Rgb([200, 0, 0]));
        img.put_pixel(1, 0, image::Rgb([200, 0, 0]));
        img.put_pixel(3, 1, image::Rgb([0, 0, 90]));
        img.save(&p).unwrap();
        let set = load_mask_png(&p, MaskEncoding::Paletted, 0).unwrap();
        assert_eq!(set.len(), 2);
        // ascending color order: (0,0,90) < (200,0,0)
        assert_eq!(set.get(1).unwrap().count(), 1);
        assert_eq!(set.get(2).unwrap().count(), 2);
    }

    #[test]
    fn low_bit_depth_indexed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let file = File::create(&p).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), 5, 1);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Two);
        enc.set_palette(vec![0, 0, 0, 255, 0, 0, 0, 255, 0, 0, 0, 255]);
        let mut w = enc.write_header().unwrap();
        // indices 0,1,2,3,1 packed 4 per byte
        w.write_image_data(&[0b00_01_10_11, 0b01_00_00_00]).unwrap();
        w.finish().unwrap();
        let set = load_mask_png(&p, MaskEncoding::Paletted, 0).unwrap();
        assert_eq!(set.ids().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(set.get(1).unwrap().count(), 2);
    }
}
