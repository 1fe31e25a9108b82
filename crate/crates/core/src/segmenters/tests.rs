use super::*;
use crate::synthetic::Scene;

fn two_blob_frame() -> Frame {
    // 40x60: blob A rows 5..15 cols 5..20, blob B rows 20..35 cols 30..55
    let (h, w) = (40, 60);
    let gray: Vec<u8> = (0..h * w)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            let a = (5..15).contains(&r) && (5..20).contains(&c);
            let b = (20..35).contains(&r) && (30..55).contains(&c);
            if a || b {
                220
            } else {
                20
            }
        })
        .collect();
    Frame::from_gray(0, h, w, &gray).unwrap()
}

#[test]
fn points_select_component_under_click() {
    let f = two_blob_frame();
    let mut seg = ThresholdSegmenter::default();
    let set = segment(&mut seg, &f, &[PromptBundle::points(7, vec![Point::new(10.5, 8.5)])]).unwrap();
    let m = set.get(7).unwrap();
    assert_eq!(m.count(), 10 * 15);
    assert!(m.get(5, 5) && !m.get(20, 30));
}

#[test]
fn box_selects_largest_component_inside() {
    let f = two_blob_frame();
    let mut seg = ThresholdSegmenter::default();
    let b = BoxPrompt::new(0.0, 0.0, 60.0, 40.0).unwrap();
    let set = init_mask_from_box(&mut seg, &f, &[b]).unwrap();
    assert_eq!(set.get(1).unwrap().count(), 15 * 25);
}

#[test]
fn degenerate_and_outside_boxes_rejected() {
    assert!(BoxPrompt::new(5.0, 5.0, 5.0, 9.0).is_err());
    let f = two_blob_frame();
    let mut seg = ThresholdSegmenter::default();
    let outside = BoxPrompt::new(100.0, 100.0, 120.0, 130.0).unwrap();
    let err = init_mask_from_box(&mut seg, &f, &[outside]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn out_of_frame_point_rejected() {
    let f = two_blob_frame();
    let mut seg = ThresholdSegmenter::default();
    let err = segment(&mut seg, &f, &[PromptBundle::points(1, vec![Point::new(60.0, 3.0)])]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn text_drops_small_components() {
    // 100x100; one 30x30 blob and a 3-pixel speck
    let (h, w) = (100, 100);
    let mut gray = vec![10u8; h * w];
    for r in 10..40 {
        for c in 10..40 {
            gray[r * w + c] = 200;
        }
    }
    for c in 80..83 {
        gray[90 * w + c] = 200;
    }
    let f = Frame::from_gray(0, h, w, &gray).unwrap();
    let mut seg = ThresholdSegmenter::default();
    let set = init_mask_from_text(&mut seg, &f, DEFAULT_TEXT_PROMPT, MASK_THRESHOLD).unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set.get(1).unwrap().count(), 900);
}

#[test]
fn text_with_nothing_bright_is_empty_region() {
    let f = Frame::from_gray(0, 20, 20, &[0u8; 400]).unwrap();
    let mut seg = ThresholdSegmenter::default();
    let err = init_mask_from_text(&mut seg, &f, "tool", MASK_THRESHOLD).unwrap_err();
    assert!(err.is_empty_region());
}

#[test]
fn text_unsupported_is_capability_error() {
    let f = two_blob_frame();
    let mut seg = FixedCostSegmenter::new(std::time::Duration::ZERO);
    let err = init_mask_from_text(&mut seg, &f, "tool", MASK_THRESHOLD).unwrap_err();
    assert!(matches!(err, Error::Capability(_)));
    let b = BoxPrompt::new(0.0, 0.0, 5.0, 5.0).unwrap();
    assert!(matches!(init_mask_from_box(&mut seg, &f, &[b]).unwrap_err(), Error::Capability(_)));
}

#[test]
fn native_resolution_round_trip() {
    let scene = Scene::moving_disk(1, Point::new(0.0, 0.0));
    let f = scene.render(0);
    let gt = scene.ground_truth(0);
    let centre = scene.disk(1).unwrap().center;
    let mut seg = ThresholdSegmenter::default().with_native_input((100, 160));
    let set = segment(&mut seg, &f, &[PromptBundle::points(1, vec![centre])]).unwrap();
    let m = set.get(1).unwrap();
    assert_eq!(m.hw(), f.hw());
    let truth = gt.get(1).unwrap();
    let inter = m.intersection_count(truth) as f64;
    let union = (m.count() + truth.count()) as f64 - inter;
    assert!(inter / union > 0.9, "iou {}", inter / union);
}

#[test]
fn masks_take_instance_ids_from_prompts() {
    let f = two_blob_frame();
    let mut seg = ThresholdSegmenter::default();
    let set = segment(
        &mut seg,
        &f,
        &[
            PromptBundle::points(4, vec![Point::new(40.0, 25.0)]),
            PromptBundle::points(2, vec![Point::new(10.0, 10.0)]),
        ],
    )
    .unwrap();
    assert_eq!(set.ids().collect::<Vec<_>>(), vec![2, 4]);
    assert_eq!(set.get(4).unwrap().count(), 15 * 25);
}

#[test]
fn remote_round_trip() {
    use std::io::BufReader;
    use std::net::TcpListener;
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        let mut inner = ThresholdSegmenter::default();
        serve_segmenter(&mut inner, &mut reader, &mut writer).unwrap();
    });
    let f = two_blob_frame();
    let mut local = ThresholdSegmenter::default();
    let prompts = [PromptBundle::points(3, vec![Point::new(10.0, 10.0)])];
    let want = segment(&mut local, &f, &prompts).unwrap();
    {
        let mut remote = SocketSegmenter::connect(&addr, PromptModes::ALL).unwrap();
        let got = segment(&mut remote, &f, &prompts).unwrap();
        assert_eq!(got, want);
        let text = init_mask_from_text(&mut remote, &f, "tool", MASK_THRESHOLD).unwrap();
        assert_eq!(text.len(), 2);
    }
    server.join().unwrap();
}
