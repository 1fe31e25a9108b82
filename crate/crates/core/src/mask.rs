use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::rle::Rle;

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be positive");
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("mask dimensions must be positive, got {height}x{width}")));
        }
        if bits.len() != height * width {
            return Err(Error::invalid(format!(
                "mask has {} cells, expected {}",
                bits.len(),
                height * width
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(height, width);
        for r in 0..height {
            for c in 0..width {
                m.bits[r * width + c] = f(r, c);
            }
        }
        m
    }

    /// Parse rows of `0`/`1` values, mostly useful in tests.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::invalid("ragged mask rows"));
        }
        let bits = rows.iter().flat_map(|r| r.as_ref().iter().map(|&v| v != 0)).collect();
        Self::from_bits(height, width, bits)
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.bits[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.bits[r * self.width + c] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Membership of a continuous point: inside iff cell `(floor(y), floor(x))` is set.
    pub fn contains_point(&self, p: &Point) -> bool {
        p.cell(self.height, self.width).is_some_and(|(r, c)| self.get(r, c))
    }

    /// Set cells as `(row, col)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// Centers of set cells in row-major order.
    pub fn pixel_centers(&self) -> Vec<Point> {
        self.cells().map(|(r, c)| Point::pixel_center(r, c)).collect()
    }

    /// Inclusive bounding box `(r0, c0, r1, c1)` of the set cells.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.cells();
        let (r, c) = it.next()?;
        let init = (r, c, r, c);
        Some(it.fold(init, |(r0, c0, r1, c1), (r, c)| (r0.min(r), c0.min(c), r1.max(r), c1.max(c))))
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        debug_assert_eq!(self.hw(), other.hw());
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// Nearest-neighbour resample to `(height, width)`.
    pub fn resized_nearest(&self, hw: (usize, usize)) -> BinaryMask {
        if hw == self.hw() {
            return self.clone();
        }
        let (h, w) = hw;
        let sy = self.height as f64 / h as f64;
        let sx = self.width as f64 / w as f64;
        let src_c: Vec<usize> = (0..w)
            .map(|c| (((c as f64 + 0.5) * sx) as usize).min(self.width - 1))
            .collect();
        BinaryMask::from_fn(h, w, |r, c| {
            let sr = (((r as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(sr, src_c[c])
        })
    }

    pub fn flipped_lr(&self) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |r, c| self.get(r, self.width - 1 - c))
    }

    pub fn flipped_ud(&self) -> BinaryMask {
        BinaryMask::from_fn(self.height, self.width, |r, c| self.get(self.height - 1 - r, c))
    }

    /// 4-connected components, ordered by their first cell in row-major order.
    pub fn components(&self) -> Vec<BinaryMask> {
        let (label, sizes) = self.label_map();
        let mut out: Vec<BinaryMask> = (1..sizes.len()).map(|_| BinaryMask::empty(self.height, self.width)).collect();
        for (i, &l) in label.iter().enumerate() {
            if l != 0 {
                out[l as usize - 1].bits[i] = true;
            }
        }
        out
    }

    /// 4-connected component labels (`0` = unset, components numbered from
    /// 1 in row-major order of first cell) and the size of each component
    /// (index 0 unused).
    pub fn label_map(&self) -> (Vec<u32>, Vec<usize>) {
        let (h, w) = self.hw();
        let mut label = vec![0u32; h * w];
        let mut sizes = vec![0usize];
        let mut stack = Vec::new();
        for start in 0..h * w {
            if !self.bits[start] || label[start] != 0 {
                continue;
            }
            let id = sizes.len() as u32;
            let mut size = 0;
            label[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                size += 1;
                let (r, c) = (i / w, i % w);
                let neighbours = [
                    (r > 0).then(|| i - w),
                    (r + 1 < h).then(|| i + w),
                    (c > 0).then(|| i - 1),
                    (c + 1 < w).then(|| i + 1),
                ];
                for j in neighbours.into_iter().flatten() {
                    if self.bits[j] && label[j] == 0 {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
            sizes.push(size);
        }
        (label, sizes)
    }

    pub fn to_rle(&self) -> Rle {
        Rle::encode(self)
    }
}

/// Per-frame mapping from instance id to mask; all masks share one size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMaskSet {
    pub frame_index: u64,
    height: usize,
    width: usize,
    masks: BTreeMap<u32, BinaryMask>,
}

impl InstanceMaskSet {
    pub fn new(frame_index: u64, height: usize, width: usize) -> Self {
        Self {
            frame_index,
            height,
            width,
            masks: BTreeMap::new(),
        }
    }

    pub fn hw(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn insert(&mut self, instance_id: u32, mask: BinaryMask) -> Result<()> {
        if mask.hw() != self.hw() {
            return Err(Error::invalid(format!(
                "instance {instance_id} mask is {:?}, set is {:?}",
                mask.hw(),
                self.hw()
            )));
        }
        if self.masks.contains_key(&instance_id) {
            return Err(Error::invalid(format!("duplicate instance id {instance_id}")));
        }
        self.masks.insert(instance_id, mask);
        Ok(())
    }

    pub fn get(&self, instance_id: u32) -> Option<&BinaryMask> {
        self.masks.get(&instance_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &BinaryMask)> {
        self.masks.iter().map(|(k, v)| (*k, v))
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.masks.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn union(&self) -> BinaryMask {
        let mut u = BinaryMask::empty(self.height, self.width);
        for m in self.masks.values() {
            u.union_with(m);
        }
        u
    }

    pub fn to_record(&self) -> MaskSetRecord {
        MaskSetRecord {
            frame_index: self.frame_index,
            height: self.height,
            width: self.width,
            masks: self.masks.iter().map(|(k, m)| (*k, m.to_rle().counts)).collect(),
        }
    }

    pub fn from_record(rec: &MaskSetRecord) -> Result<Self> {
        let mut set = InstanceMaskSet::new(rec.frame_index, rec.height, rec.width);
        for (id, counts) in &rec.masks {
            set.insert(*id, crate::rle::rle_to_mask(counts, rec.height, rec.width)?)?;
        }
        Ok(set)
    }
}

/// JSON form of an [`InstanceMaskSet`]: RLE counts per instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSetRecord {
    pub frame_index: u64,
    pub height: usize,
    pub width: usize,
    pub masks: BTreeMap<u32, Vec<u64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_split_disjoint_blobs() {
        let m = BinaryMask::from_rows(&[[1, 1, 0, 1], [0, 0, 0, 1], [1, 0, 0, 0]]).unwrap();
        let comps = m.components();
        assert_eq!(comps.len(), 3);
        assert_eq!(comps[0].count(), 2);
        assert_eq!(comps[1].count(), 2);
        assert_eq!(comps[2].count(), 1);
        // diagonal neighbours are not connected
        let d = BinaryMask::from_rows(&[[1, 0], [0, 1]]).unwrap();
        assert_eq!(d.components().len(), 2);
    }

    #[test]
    fn nearest_resize_round_trip_on_integer_scale() {
        let m = BinaryMask::from_rows(&[[1, 0, 1], [0, 1, 1]]).unwrap();
        let up = m.resized_nearest((4, 6));
        assert_eq!(up.count(), m.count() * 4);
        assert_eq!(up.resized_nearest((2, 3)), m);
    }

    #[test]
    fn flips_are_involutions() {
        let m = BinaryMask::from_rows(&[[1, 0, 0], [1, 1, 0]]).unwrap();
        assert_eq!(m.flipped_lr().flipped_lr(), m);
        assert_eq!(m.flipped_ud().flipped_ud(), m);
        assert!(m.flipped_lr().get(0, 2));
    }

    #[test]
    fn mask_set_rejects_mismatched_dims() {
        let mut s = InstanceMaskSet::new(0, 2, 2);
        assert!(s.insert(1, BinaryMask::empty(2, 3)).is_err());
        s.insert(1, BinaryMask::empty(2, 2)).unwrap();
        assert!(s.insert(1, BinaryMask::empty(2, 2)).is_err());
    }

    #[test]
    fn bbox_and_membership() {
        let m = BinaryMask::from_rows(&[[0, 0, 0], [0, 1, 1], [0, 1, 0]]).unwrap();
        assert_eq!(m.bbox(), Some((1, 1, 2, 2)));
        assert!(m.contains_point(&Point::new(1.99, 1.0)));
        assert!(!m.contains_point(&Point::new(0.99, 1.0)));
        assert_eq!(BinaryMask::empty(2, 2).bbox(), None);
    }
}
