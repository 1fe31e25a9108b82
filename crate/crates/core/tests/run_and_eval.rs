use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use tapseg_core::evalbench::{evaluate_run, ingest_dataset, DatasetLayout, GtKind};
use tapseg_core::maskio::{save_paletted_png, MaskEncoding};
use tapseg_core::pipeline::{run, FrameRecord, InitInput, InitMode, PipelineConfig, RunSpec};
use tapseg_core::segmenters::ThresholdSegmenter;
use tapseg_core::synthetic::Scene;
use tapseg_core::trackers::{NccConfig, NccTracker};
use tapseg_core::video::{frame_file_name, ImageDirSource};
use tapseg_core::{InstanceMaskSet, Point};

fn write_dataset(scene: &Scene, root: &Path) {
    fs::create_dir_all(root.join("frames")).unwrap();
    fs::create_dir_all(root.join("masks")).unwrap();
    for t in 0..scene.frames {
        let name = frame_file_name(t);
        scene.render(t).to_rgb_image().save(root.join("frames").join(&name)).unwrap();
        save_paletted_png(&scene.ground_truth(t), &root.join("masks").join(&name)).unwrap();
    }
}

fn run_to_jsonl(frames: &Path, out: &Path) -> usize {
    let mut src = ImageDirSource::open(frames, 25.0).unwrap();
    let spec = RunSpec {
        tracker: Box::new(NccTracker::new(NccConfig::default())),
        segmenter: Box::new(ThresholdSegmenter::default()),
        init: InitInput::default_text(),
        config: PipelineConfig {
            init_mode: InitMode::Text,
            ..PipelineConfig::default()
        },
    };
    let mut file = fs::File::create(out).unwrap();
    let summary = run(&mut src, spec, &mut |r| {
        serde_json::to_writer(&mut file, &r.to_record(false)).unwrap();
        file.write_all(b"\n").unwrap();
        Ok(())
    })
    .map_err(|f| f.error)
    .unwrap();
    summary.frames as usize
}

fn read_jsonl(path: &Path) -> Vec<InstanceMaskSet> {
    BufReader::new(fs::File::open(path).unwrap())
        .lines()
        .map(|l| serde_json::from_str::<FrameRecord>(&l.unwrap()).unwrap().masks().unwrap())
        .collect()
}

#[test]
fn image_directory_run_scores_against_dataset_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Scene::moving_disk(40, Point::new(1.0, 0.5));
    write_dataset(&scene, dir.path());

    let out = dir.path().join("masks.jsonl");
    assert_eq!(run_to_jsonl(&dir.path().join("frames"), &out), 40);
    let preds = read_jsonl(&out);
    assert_eq!(preds.len(), 40);

    let layout = DatasetLayout {
        frames_dir: "frames".into(),
        masks_dir: "masks".into(),
        mask_encoding: MaskEncoding::Paletted,
    };
    let gt = ingest_dataset(dir.path(), &layout).unwrap().ground_truth().unwrap();
    let (records, summary) = evaluate_run(&preds, &gt, GtKind::Instance).unwrap();
    assert_eq!(records.len(), 40);
    assert_eq!(summary.frames, 40);
    assert!(summary.mean_iou >= 0.95, "mean IoU {}", summary.mean_iou);
    assert!(summary.mean_dice >= summary.mean_iou);
}

#[test]
fn predictions_past_the_labeled_range_are_an_alignment_error() {
    let dir = tempfile::tempdir().unwrap();
    let scene = Scene::moving_disk(12, Point::new(1.0, 0.0));
    write_dataset(&scene, dir.path());
    let out = dir.path().join("masks.jsonl");
    run_to_jsonl(&dir.path().join("frames"), &out);
    let preds = read_jsonl(&out);

    let mut gt = ingest_dataset(
        dir.path(),
        &DatasetLayout {
            frames_dir: "frames".into(),
            masks_dir: "masks".into(),
            mask_encoding: MaskEncoding::Paletted,
        },
    )
    .unwrap()
    .ground_truth()
    .unwrap();
    gt.remove(&7);
    let err = evaluate_run(&preds, &gt, GtKind::Instance).unwrap_err();
    assert!(matches!(err, tapseg_core::Error::Alignment { ref missing } if missing == &vec![7]), "{err}");
}
