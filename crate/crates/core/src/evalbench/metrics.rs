//! Overlap metrics and per-run evaluation against ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, InstanceMaskSet};

fn overlap(pred: &BinaryMask, gt: &BinaryMask) -> Result<(usize, usize, usize)> {
    if pred.hw() != gt.hw() {
        return Err(Error::invalid(format!(
            "mask dimensions differ: {:?} vs {:?}",
            pred.hw(),
            gt.hw()
        )));
    }
    Ok((pred.intersection_count(gt), pred.count(), gt.count()))
}

/// Intersection over union. Two empty masks score 1, one empty mask 0.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = overlap(pred, gt)?;
    let union = p + g - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Dice coefficient, with the same empty-mask conventions as [`iou`].
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (inter, p, g) = overlap(pred, gt)?;
    Ok(if p + g == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + g) as f64
    })
}

/// Which ground-truth region a record scores against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Instance(u32),
    /// The union of all predicted instances against a binary label.
    Binary(BinaryTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryTag {
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub frame_index: u64,
    pub instance_id: Target,
    /// Predicted instance matched to this target, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_pred: Option<u32>,
    pub iou: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GtKind {
    Instance,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub frames: usize,
    pub mean_iou: f64,
    pub mean_dice: f64,
}

/// Greedy max-IoU matching of predictions to ground-truth instances.
///
/// Pairs are taken in order of decreasing IoU (ties by lower gt id, then
/// lower prediction id); each side is used at most once. Ground-truth
/// instances left unmatched are scored against an empty mask.
pub fn greedy_match(pred: &InstanceMaskSet, gt: &InstanceMaskSet) -> Result<Vec<(u32, Option<u32>)>> {
    let mut pairs = Vec::new();
    for (g, gm) in gt.iter() {
        for (p, pm) in pred.iter() {
            let s = iou(pm, gm)?;
            if s > 0.0 {
                pairs.push((s, g, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = BTreeMap::new();
    let mut pred_used = BTreeSet::new();
    for (_, g, p) in pairs {
        if gt_used.contains_key(&g) || pred_used.contains(&p) {
            continue;
        }
        gt_used.insert(g, p);
        pred_used.insert(p);
    }
    Ok(gt.ids().map(|g| (g, gt_used.get(&g).copied())).collect())
}

/// Score one frame. Returns one record per ground-truth instance (or one
/// binary record).
pub fn evaluate_frame(pred: &InstanceMaskSet, gt: &InstanceMaskSet, kind: GtKind) -> Result<Vec<MetricRecord>> {
    let frame_index = gt.frame_index;
    let (h, w) = gt.hw();
    let pred = if pred.len() == 0 {
        // no predicted instances; keep dimensions from the ground truth
        InstanceMaskSet::new(pred.frame_index, h, w)
    } else {
        pred.clone()
    };
    match kind {
        GtKind::Binary => {
            let p = pred.union();
            let g = gt.union();
            Ok(vec![MetricRecord {
                frame_index,
                instance_id: Target::Binary(BinaryTag::Binary),
                matched_pred: None,
                iou: iou(&p, &g)?,
                dice: dice(&p, &g)?,
            }])
        }
        GtKind::Instance => {
            let empty = BinaryMask::empty(h, w);
            greedy_match(&pred, gt)?
                .into_iter()
                .map(|(g, p)| {
                    let gm = gt.get(g).expect("id from gt");
                    let pm = p.and_then(|p| pred.get(p)).unwrap_or(&empty);
                    Ok(MetricRecord {
                        frame_index,
                        instance_id: Target::Instance(g),
                        matched_pred: p,
                        iou: iou(pm, gm)?,
                        dice: dice(pm, gm)?,
                    })
                })
                .collect()
        }
    }
}

/// Score a run against ground truth keyed by frame index.
///
/// Every predicted frame must have ground truth; ground-truth frames without
/// predictions are ignored. The summary averages instances within a frame,
/// then frames.
pub fn evaluate_run<'a>(
    results: impl IntoIterator<Item = &'a InstanceMaskSet>,
    gt: &BTreeMap<u64, InstanceMaskSet>,
    kind: GtKind,
) -> Result<(Vec<MetricRecord>, EvalSummary)> {
    let results: Vec<&InstanceMaskSet> = results.into_iter().collect();
    let missing: Vec<u64> = results
        .iter()
        .map(|r| r.frame_index)
        .filter(|i| !gt.contains_key(i))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Alignment { missing });
    }
    let mut records = Vec::new();
    let (mut iou_sum, mut dice_sum, mut frames) = (0.0, 0.0, 0usize);
    for pred in results {
        let recs = evaluate_frame(pred, &gt[&pred.frame_index], kind)?;
        if !recs.is_empty() {
            let n = recs.len() as f64;
            iou_sum += recs.iter().map(|r| r.iou).sum::<f64>() / n;
            dice_sum += recs.iter().map(|r| r.dice).sum::<f64>() / n;
            frames += 1;
        }
        records.extend(recs);
    }
    let mean = |s: f64| if frames == 0 { 0.0 } else { s / frames as f64 };
    Ok((
        records,
        EvalSummary {
            frames,
            mean_iou: mean(iou_sum),
            mean_dice: mean(dice_sum),
        },
    ))
}
