use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Soft-Dice smoothing term.
pub const DICE_EPSILON: f64 = 1.0;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before the log.
const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

impl LossReport {
    fn new(bce: f64, dice: f64) -> Self {
        LossReport {
            bce,
            dice,
            total: bce + dice,
        }
    }
}

fn check(n: usize, gt: &BinaryMask) -> Result<()> {
    if n != gt.height() * gt.width() {
        return Err(Error::invalid(format!(
            "prediction has {n} values but mask is {}x{}",
            gt.height(),
            gt.width()
        )));
    }
    Ok(())
}

/// Mean binary cross-entropy plus soft Dice loss.
pub fn loss(pred_prob: &[f64], gt: &BinaryMask, epsilon: f64) -> Result<LossReport> {
    check(pred_prob.len(), gt)?;
    let n = pred_prob.len() as f64;
    let (mut bce, mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &g) in pred_prob.iter().zip(gt.bits()) {
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let g = if g { 1.0 } else { 0.0 };
        bce -= g * pc.ln() + (1.0 - g) * (1.0 - pc).ln();
        inter += p * g;
        sp += p;
        sg += g;
    }
    let dice = 1.0 - (2.0 * inter + epsilon) / (sp + sg + epsilon);
    Ok(LossReport::new(bce / n, dice))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss of `sigmoid(logits)` and its gradient with respect to each logit.
pub fn loss_with_logit_grad(logits: &[f64], gt: &BinaryMask, epsilon: f64) -> Result<(LossReport, Vec<f64>)> {
    check(logits.len(), gt)?;
    let p: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let report = loss(&p, gt, epsilon)?;
    let n = p.len() as f64;
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&pi, &g) in p.iter().zip(gt.bits()) {
        let g = if g { 1.0 } else { 0.0 };
        inter += pi * g;
        sp += pi;
        sg += g;
    }
    let num = 2.0 * inter + epsilon;
    let den = sp + sg + epsilon;
    let grad = p
        .iter()
        .zip(gt.bits())
        .map(|(&pi, &g)| {
            let g = if g { 1.0 } else { 0.0 };
            // the clamp is flat outside its range
            let dbce_dp = if pi > PROB_CLAMP && pi < 1.0 - PROB_CLAMP {
                (-g / pi + (1.0 - g) / (1.0 - pi)) / n
            } else {
                0.0
            };
            let ddice_dp = -(2.0 * g * den - num) / (den * den);
            (dbce_dp + ddice_dp) * pi * (1.0 - pi)
        })
        .collect();
    Ok((report, grad))
}
