use std::collections::BTreeMap;
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::finetune::{FreezeMap, LinearToyModel};
use crate::geometry::Point;
use crate::mask::{BinaryMask, InstanceMaskSet};
use crate::maskio::{save_binary_png, save_paletted_png, MaskEncoding};
use crate::pipeline::{InitInput, InitMode, PipelineConfig, PipelineSession};
use crate::sampling::ManualPoints;
use crate::segmenters::FixedCostSegmenter;
use crate::trackers::StaticTracker;
use crate::video::{frame_file_name, VecSource};
use crate::Frame;

fn block(h: usize, w: usize, r0: usize, c0: usize, size: usize) -> BinaryMask {
    BinaryMask::from_fn(h, w, |r, c| (r0..r0 + size).contains(&r) && (c0..c0 + size).contains(&c))
}

#[test]
fn shifted_block_scores() {
    let a = block(4, 4, 0, 0, 2);
    let b = block(4, 4, 0, 1, 2);
    assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(dice(&a, &b).unwrap(), 0.5);
    assert_eq!(iou(&a, &a).unwrap(), 1.0);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
}

#[test]
fn degenerate_conventions() {
    let e = BinaryMask::empty(3, 3);
    let f = block(3, 3, 0, 0, 1);
    assert_eq!(iou(&e, &e).unwrap(), 1.0);
    assert_eq!(dice(&e, &e).unwrap(), 1.0);
    assert_eq!(iou(&e, &f).unwrap(), 0.0);
    assert_eq!(dice(&f, &e).unwrap(), 0.0);
    assert_eq!(dice(&f, &block(3, 3, 2, 2, 1)).unwrap(), 0.0);
    assert!(matches!(iou(&e, &BinaryMask::empty(3, 4)), Err(Error::InvalidArgument(_))));
}

proptest! {
    #[test]
    fn dice_iou_identity_and_symmetry(a in prop::collection::vec(any::<bool>(), 30), b in prop::collection::vec(any::<bool>(), 30)) {
        let a = BinaryMask::from_bits(5, 6, a).unwrap();
        let b = BinaryMask::from_bits(5, 6, b).unwrap();
        let i = iou(&a, &b).unwrap();
        let d = dice(&a, &b).unwrap();
        prop_assert!((d - 2.0 * i / (1.0 + i)).abs() < 1e-12);
        prop_assert!(d >= i);
        prop_assert_eq!(i, iou(&b, &a).unwrap());
        prop_assert_eq!(d, dice(&b, &a).unwrap());
    }

    #[test]
    fn greedy_matching_is_injective(seed in any::<u64>()) {
        let mut s = seed;
        let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); (s >> 33) as usize };
        let mut pred = InstanceMaskSet::new(0, 12, 12);
        let mut gt = InstanceMaskSet::new(0, 12, 12);
        for id in 1..=4u32 {
            pred.insert(id, block(12, 12, next() % 9, next() % 9, 3)).unwrap();
            gt.insert(id, block(12, 12, next() % 9, next() % 9, 3)).unwrap();
        }
        let matches = greedy_match(&pred, &gt).unwrap();
        let used: Vec<u32> = matches.iter().filter_map(|m| m.1).collect();
        let mut dedup = used.clone();
        dedup.sort();
        dedup.dedup();
        prop_assert_eq!(used.len(), dedup.len());
    }
}

fn set(frame: u64, masks: &[(u32, BinaryMask)]) -> InstanceMaskSet {
    let (h, w) = masks[0].1.hw();
    let mut s = InstanceMaskSet::new(frame, h, w);
    for (id, m) in masks {
        s.insert(*id, m.clone()).unwrap();
    }
    s
}

#[test]
fn greedy_matching_prefers_best_overlap() {
    let gt = set(0, &[(1, block(8, 8, 0, 0, 3)), (2, block(8, 8, 4, 4, 3))]);
    // prediction 7 overlaps gt 2 exactly, prediction 9 overlaps gt 1 partly
    let pred = set(0, &[(7, block(8, 8, 4, 4, 3)), (9, block(8, 8, 0, 1, 3))]);
    assert_eq!(greedy_match(&pred, &gt).unwrap(), vec![(1, Some(9)), (2, Some(7))]);
    let recs = evaluate_frame(&pred, &gt, GtKind::Instance).unwrap();
    assert_eq!(recs[1].iou, 1.0);
    assert_eq!(recs[0].instance_id, Target::Instance(1));
}

#[test]
fn perfect_run_scores_one_and_averages_within_frames() {
    let gt: BTreeMap<u64, InstanceMaskSet> = (0..3)
        .map(|t| (t, set(t, &[(1, block(8, 8, t as usize, 0, 3)), (2, block(8, 8, 5, 5, 2))])))
        .collect();
    let (recs, sum) = evaluate_run(gt.values(), &gt, GtKind::Instance).unwrap();
    assert_eq!(recs.len(), 6);
    assert_eq!((sum.mean_iou, sum.mean_dice, sum.frames), (1.0, 1.0, 3));

    // frame 0 misses instance 2 entirely: that frame scores (1 + 0) / 2
    let mut preds: Vec<InstanceMaskSet> = gt.values().cloned().collect();
    preds[0] = set(0, &[(1, block(8, 8, 0, 0, 3))]);
    let (_, sum) = evaluate_run(&preds, &gt, GtKind::Instance).unwrap();
    assert!((sum.mean_iou - (0.5 + 1.0 + 1.0) / 3.0).abs() < 1e-12);
}

#[test]
fn binary_mode_scores_the_union() {
    let gt = set(0, &[(1, block(8, 8, 0, 0, 4))]);
    let pred = set(0, &[(1, block(8, 8, 0, 0, 2)), (2, block(8, 8, 2, 2, 2))]);
    let recs = evaluate_frame(&pred, &gt, GtKind::Binary).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].iou, 0.5);
    assert_eq!(serde_json::to_value(&recs[0]).unwrap()["instance_id"], "binary");
}

#[test]
fn missing_ground_truth_lists_frames() {
    let gt: BTreeMap<u64, InstanceMaskSet> = [(0, set(0, &[(1, block(4, 4, 0, 0, 1))]))].into();
    let preds = [set(0, &[(1, block(4, 4, 0, 0, 1))]), set(4, &[(1, block(4, 4, 0, 0, 1))]), set(7, &[(1, block(4, 4, 0, 0, 1))])];
    let err = evaluate_run(&preds, &gt, GtKind::Instance).unwrap_err();
    assert!(matches!(err, Error::Alignment { ref missing } if missing == &vec![4, 7]));
}

struct Sized(Vec<(String, usize)>);

impl ParameterInventory for Sized {
    fn parameter_groups(&self) -> crate::Result<Vec<(String, usize)>> {
        Ok(self.0.clone())
    }
}

struct Opaque;
impl ParameterInventory for Opaque {}

#[test]
fn learnable_parameter_counts() {
    let none_frozen = FreezeMap {
        prompt_encoder: false,
        image_encoder: false,
        mask_decoder: false,
    };
    let m = Sized(vec![("image_encoder".into(), 1_000_000)]);
    assert_eq!(count_learnable_params(&m, &none_frozen).unwrap(), 1.0);
    let half = Sized(vec![("prompt_encoder".into(), 500_000), ("mask_decoder".into(), 500_000)]);
    assert_eq!(count_learnable_params(&half, &FreezeMap::default()).unwrap(), 0.5);
    assert_eq!(count_learnable_params(&LinearToyModel::default(), &FreezeMap::default()).unwrap(), 0.0);
    assert!(matches!(count_learnable_params(&Opaque, &none_frozen), Err(Error::Capability(_))));
}

fn stub_frames(n: u64) -> Vec<Frame> {
    (0..n).map(|i| Frame::from_gray(i, 16, 16, &[128u8; 256]).unwrap().with_index(i, i as f64 * 40.0)).collect()
}

fn stub_session(first: &Frame, cost_ms: u64) -> crate::Result<PipelineSession> {
    let config = PipelineConfig {
        init_mode: InitMode::Points,
        ..PipelineConfig::default()
    };
    PipelineSession::initialize_on(
        first,
        Box::new(StaticTracker::new(Duration::ZERO)),
        Box::new(FixedCostSegmenter::new(Duration::from_millis(cost_ms))),
        InitInput::Points(vec![ManualPoints {
            instance_id: 1,
            points: vec![Point::new(8.0, 8.0)],
        }]),
        config,
    )
    .map(|(s, _)| s)
}

#[test]
fn latency_bench_drops_warmup_and_writes_raw_samples() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("raw.csv");
    let config = BenchConfig {
        warmup_frames: 3,
        measured_frames: 10,
        device: "test-cpu".into(),
    };
    let mut video = VecSource::new(stub_frames(15));
    let b = bench_latency(|f| stub_session(f, 1), &mut video, &config, &csv_path).unwrap();
    assert_eq!(b.samples.len(), 12);
    assert_eq!(b.samples[0].0, 3);
    assert_eq!(b.device, "test-cpu");
    assert!(b.stats.p50 >= 1.0 && b.stats.p50 <= b.stats.p90 && b.stats.p90 <= b.stats.p99);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(&csv_path).unwrap().records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    // the summary is re-derivable from the raw dump
    let raw: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(crate::stats::LatencyStats::from_samples(&raw).unwrap(), b.stats);
    assert_ne!(b.memory.provenance, MemoryProvenance::Backend);
}

#[test]
fn latency_bench_needs_enough_frames() {
    let dir = tempfile::tempdir().unwrap();
    let config = BenchConfig::default();
    let mut video = VecSource::new(stub_frames(50));
    let err = bench_latency(|f| stub_session(f, 0), &mut video, &config, &dir.path().join("r.csv")).unwrap_err();
    assert!(matches!(err, Error::InsufficientData { needed: 220, .. }));
}

#[test]
fn report_renders_both_tables() {
    let mut r = BenchReport::new("tapseg", "synthetic").with_accuracy(&EvalSummary {
        frames: 3,
        mean_iou: 0.844,
        mean_dice: 0.91,
    });
    r.learnable_params_m = Some(10.1);
    r.latency_ms.insert(
        "RTX 4060".into(),
        LatencySummary {
            p50: 38.0,
            p90: 40.0,
            p99: 45.5,
            mean: 38.7,
        },
    );
    let text = r.to_text();
    assert!(text.contains("84.4") && text.contains("91.0"));
    assert!(text.contains("RTX 4060") && text.contains("10.1"));
    let json: BenchReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(json, r);
}

fn write_dataset(root: &std::path::Path, frames: &[u64], masks: &[u64]) {
    std::fs::create_dir_all(root.join("frames")).unwrap();
    std::fs::create_dir_all(root.join("masks")).unwrap();
    for &i in frames {
        Frame::from_gray(i, 6, 6, &[90u8; 36]).unwrap().to_rgb_image().save(root.join("frames").join(frame_file_name(i))).unwrap();
    }
    for &i in masks {
        let s = set(i, &[(1, block(6, 6, 0, 0, 2)), (2, block(6, 6, 3, 3, 2))]);
        save_paletted_png(&s, &root.join("masks").join(frame_file_name(i))).unwrap();
    }
}

fn layout(enc: MaskEncoding) -> DatasetLayout {
    DatasetLayout {
        frames_dir: "frames".into(),
        masks_dir: "masks".into(),
        mask_encoding: enc,
    }
}

#[test]
fn dataset_pairs_frames_with_masks() {
    let dir = tempfile::tempdir().unwrap();
    let ids: Vec<u64> = (0..10).collect();
    write_dataset(dir.path(), &ids, &ids);
    let ds = ingest_dataset(dir.path(), &layout(MaskEncoding::Paletted)).unwrap();
    assert_eq!(ds.pairs.len(), 10);
    let gt = ds.ground_truth().unwrap();
    assert_eq!(gt[&4].len(), 2);
    let binary = ingest_dataset(dir.path(), &layout(MaskEncoding::Binary)).unwrap();
    assert_eq!(binary.ground_truth().unwrap()[&4].len(), 1);
}

#[test]
fn orphan_frames_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<u64> = (0..10).collect();
    let masks: Vec<u64> = (0..10).filter(|&i| i != 7).collect();
    write_dataset(dir.path(), &frames, &masks);
    let err = ingest_dataset(dir.path(), &layout(MaskEncoding::Paletted)).unwrap_err();
    match err {
        Error::Manifest { paths, .. } => {
            assert_eq!(paths.len(), 1);
            assert!(paths[0].ends_with(frame_file_name(7)));
        }
        e => panic!("{e}"),
    }
    save_binary_png(&block(6, 6, 0, 0, 1), &dir.path().join("masks").join(frame_file_name(7))).unwrap();
    save_binary_png(&block(6, 6, 0, 0, 1), &dir.path().join("masks").join(frame_file_name(12))).unwrap();
    assert!(ingest_dataset(dir.path(), &layout(MaskEncoding::Paletted)).is_err());
}
