//! Row-major run-length encoding of binary masks.
//!
//! Counts alternate between runs of `0` and runs of `1`, always starting with
//! a (possibly empty) zero run, so a mask whose first cell is set begins with
//! a `0` count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Wire form: `{"counts": [...], "height": H, "width": W}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub counts: Vec<u64>,
    pub height: usize,
    pub width: usize,
}

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Self {
        Self {
            counts: mask_to_rle(mask),
            height: mask.height(),
            width: mask.width(),
        }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        rle_to_mask(&self.counts, self.height, self.width)
    }
}

pub fn mask_to_rle(mask: &BinaryMask) -> Vec<u64> {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for &b in mask.bits() {
        if b != current {
            counts.push(run);
            run = 0;
            current = b;
        }
        run += 1;
    }
    counts.push(run);
    counts
}

pub fn rle_to_mask(counts: &[u64], height: usize, width: usize) -> Result<BinaryMask> {
    let total = (height * width) as u64;
    let sum = counts
        .iter()
        .try_fold(0u64, |acc, &c| acc.checked_add(c))
        .ok_or_else(|| Error::Decode("count sum overflows".into()))?;
    if sum != total {
        return Err(Error::Decode(format!(
            "counts sum to {sum}, expected {height}x{width} = {total}"
        )));
    }
    let mut bits = Vec::with_capacity(total as usize);
    let mut value = false;
    for &c in counts {
        bits.extend(std::iter::repeat_n(value, c as usize));
        value = !value;
    }
    BinaryMask::from_bits(height, width, bits)
}
