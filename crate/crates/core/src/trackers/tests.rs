use std::sync::Arc;
use std::time::Duration;

use super::*;
use crate::synthetic::{Occluder, Scene};

fn disk_queries(scene: &Scene, offsets: &[(f64, f64)]) -> Vec<QueryPointSet> {
    let c = scene.disk(1).unwrap().center;
    let pts = offsets.iter().map(|&(dx, dy)| Point::new(c.x + dx, c.y + dy)).collect();
    vec![QueryPointSet::new(1, pts, 0)]
}

fn run(scene: &Scene, adapter: Box<dyn TrackerAdapter>, queries: Vec<QueryPointSet>) -> Vec<Vec<TrackedPointSet>> {
    let (mut session, first) = TrackerSession::init(adapter, &scene.render(0), queries, DEFAULT_WINDOW).unwrap();
    let mut out = vec![first];
    for t in 1..scene.frames {
        out.push(session.step(&scene.render(t)).unwrap());
    }
    out
}

const OFFSETS: [(f64, f64); 5] = [(0.0, 0.0), (-12.0, -8.0), (10.0, 9.0), (15.0, -14.0), (-9.0, 14.0)];

#[test]
fn static_video_keeps_points_in_place() {
    let scene = Scene::moving_disk(12, Point::new(0.0, 0.0));
    let q = disk_queries(&scene, &OFFSETS);
    for adapter in [
        Box::new(NccTracker::new(NccConfig::default())) as Box<dyn TrackerAdapter>,
        Box::new(OracleTracker::new(scene.clone().into_motion_field())),
    ] {
        let out = run(&scene, adapter, q.clone());
        for frame in &out {
            for (p, q) in frame[0].points.iter().zip(&q[0].points) {
                assert!(p.dist(q) < 0.1, "{p:?} vs {q:?}");
            }
            assert!(frame[0].visible.iter().all(|v| *v));
        }
    }
}

#[test]
fn translation_by_two_pixels_per_frame() {
    let scene = Scene::moving_disk(10, Point::new(2.0, 0.0));
    let out = run(&scene, Box::new(NccTracker::new(NccConfig::default())), disk_queries(&scene, &OFFSETS));
    for w in out.windows(2) {
        for (a, b) in w[0][0].points.iter().zip(&w[1][0].points) {
            let dx = b.x - a.x;
            assert!((dx - 2.0).abs() <= 0.5, "dx {dx}");
            assert!((b.y - a.y).abs() <= 0.5);
        }
    }
}

#[test]
fn ncc_drift_stays_within_a_pixel() {
    for (vx, vy) in [(1.0, 0.0), (3.0, 0.0), (0.0, -2.0), (2.0, 2.0), (-1.5, 1.0)] {
        let mut scene = Scene::moving_disk(51, Point::new(vx, vy));
        scene.width = 480;
        scene.height = 300;
        scene.disks[0].center = Point::new(240.0 - 25.0 * vx, 150.0 - 25.0 * vy);
        let q = disk_queries(&scene, &OFFSETS);
        let out = run(&scene, Box::new(NccTracker::new(NccConfig::default())), q.clone());
        let last = out.last().unwrap();
        for (p, q0) in last[0].points.iter().zip(&q[0].points) {
            let truth = Point::new(q0.x + 50.0 * vx, q0.y + 50.0 * vy);
            assert!(p.dist(&truth) <= 1.0, "v=({vx},{vy}) drift {}", p.dist(&truth));
        }
        assert!(last[0].visible.iter().all(|v| *v));
    }
}

#[test]
fn leaving_the_frame_goes_invisible() {
    let mut scene = Scene::moving_disk(30, Point::new(8.0, 0.0));
    scene.disks[0].center = Point::new(200.0, 90.0);
    let q = disk_queries(&scene, &[(0.0, 0.0)]);
    for adapter in [
        Box::new(NccTracker::new(NccConfig::default())) as Box<dyn TrackerAdapter>,
        Box::new(OracleTracker::new(scene.clone().into_motion_field())),
    ] {
        let out = run(&scene, adapter, q.clone());
        // the point crosses x = 320 at t = 15
        for frame in &out[16..] {
            assert!(!frame[0].visible[0]);
        }
        assert!(out[10][0].visible[0]);
    }
}

#[test]
fn oracle_reports_occlusion() {
    let mut scene = Scene::moving_disk(10, Point::new(0.0, 0.0));
    scene.occluders.push(Occluder {
        rect: [60.0, 60.0, 120.0, 120.0],
        from: 3,
        until: 5,
    });
    let out = run(&scene, Box::new(OracleTracker::new(scene.clone().into_motion_field())), disk_queries(&scene, &[(0.0, 0.0)]));
    let vis: Vec<bool> = out.iter().map(|f| f[0].visible[0]).collect();
    assert_eq!(vis, [true, true, true, false, false, true, true, true, true, true]);
}

#[test]
fn frame_indices_must_increase() {
    let scene = Scene::moving_disk(5, Point::new(0.0, 0.0));
    let (mut s, _) = TrackerSession::init(
        Box::new(StaticTracker::new(Duration::ZERO)),
        &scene.render(0),
        disk_queries(&scene, &[(0.0, 0.0)]),
        2,
    )
    .unwrap();
    s.step(&scene.render(2)).unwrap();
    for bad in [2, 1] {
        let err = s.step(&scene.render(bad)).unwrap_err();
        assert!(matches!(err, Error::Ordering { last: 2, .. }), "{err}");
    }
    s.step(&scene.render(3)).unwrap();
    assert_eq!(s.buffered_frames(), 2);
}

#[test]
fn init_rejects_out_of_bounds_queries() {
    let scene = Scene::moving_disk(2, Point::new(0.0, 0.0));
    let q = vec![QueryPointSet::new(1, vec![Point::new(320.0, 10.0)], 0)];
    let err = TrackerSession::init(Box::new(StaticTracker::new(Duration::ZERO)), &scene.render(0), q, 4).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn add_queries_mid_stream() {
    let scene = Scene::moving_disk(8, Point::new(1.0, 0.0));
    let field = scene.clone().into_motion_field();
    let (mut s, _) = TrackerSession::init(
        Box::new(OracleTracker::new(field)),
        &scene.render(0),
        disk_queries(&scene, &[(0.0, 0.0)]),
        4,
    )
    .unwrap();
    for t in 1..=4 {
        s.step(&scene.render(t)).unwrap();
    }
    let c = scene.disk(1).unwrap().center_at(4);
    let late = QueryPointSet::new(2, vec![Point::new(c.x + 3.0, c.y)], 4);
    // must be added at the newest frame
    assert!(s.add_queries(vec![late.clone()], &scene.render(3)).is_err());
    s.add_queries(vec![late], &scene.render(4)).unwrap();
    let out = s.step(&scene.render(5)).unwrap();
    assert_eq!(out.iter().map(|t| t.instance_id).collect::<Vec<_>>(), vec![1, 2]);
    assert!((out[1].points[0].x - (c.x + 4.0)).abs() < 1e-9);
    // duplicate id
    let dup = QueryPointSet::new(2, vec![Point::new(5.0, 5.0)], 5);
    assert!(s.add_queries(vec![dup], &scene.render(5)).is_err());
    s.drop_instances(&[1]).unwrap();
    let out = s.step(&scene.render(6)).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].instance_id, 2);
}

#[test]
fn add_queries_without_support_is_capability_error() {
    let scene = Scene::moving_disk(3, Point::new(0.0, 0.0));
    let (mut s, _) = TrackerSession::init(
        Box::new(StaticTracker::new(Duration::ZERO).without_midstream()),
        &scene.render(0),
        disk_queries(&scene, &[(0.0, 0.0)]),
        4,
    )
    .unwrap();
    let q = QueryPointSet::new(2, vec![Point::new(5.0, 5.0)], 0);
    assert!(matches!(s.add_queries(vec![q], &scene.render(0)).unwrap_err(), Error::Capability(_)));
}

struct WildTracker;

impl TrackerAdapter for WildTracker {
    fn name(&self) -> &str {
        "wild"
    }
    fn capabilities(&self) -> TrackerCapabilities {
        TrackerCapabilities {
            supports_visibility: true,
            supports_midstream_queries: false,
        }
    }
    fn init(&mut self, _: &Frame, _: &[QueryPointSet], _: usize) -> Result<()> {
        Ok(())
    }
    fn step(&mut self, window: &[Frame]) -> Result<Vec<TrackedPointSet>> {
        let f = window.last().unwrap();
        Ok(vec![TrackedPointSet::all_visible(
            1,
            f.index,
            vec![Point::new(-3.0, 4.0), Point::new(4.0, 4.0)],
        )])
    }
    fn add_queries(&mut self, _: &[QueryPointSet], _: &Frame) -> Result<()> {
        Ok(())
    }
}

#[test]
fn out_of_bounds_output_forced_invisible() {
    let scene = Scene::moving_disk(2, Point::new(0.0, 0.0));
    let q = vec![QueryPointSet::new(1, vec![Point::new(1.0, 1.0), Point::new(2.0, 2.0)], 0)];
    let (mut s, _) = TrackerSession::init(Box::new(WildTracker), &scene.render(0), q, 4).unwrap();
    let out = s.step(&scene.render(1)).unwrap();
    assert_eq!(out[0].visible, vec![false, true]);
}

#[test]
fn step_many_matches_step() {
    let scene = Scene::moving_disk(15, Point::new(1.5, -1.0));
    let q = disk_queries(&scene, &OFFSETS);
    let frames: Vec<Frame> = (0..15).map(|t| scene.render(t)).collect();
    let (mut a, _) = TrackerSession::init(Box::new(NccTracker::new(NccConfig::default())), &frames[0], q.clone(), 4).unwrap();
    let (mut b, _) = TrackerSession::init(Box::new(NccTracker::new(NccConfig::default())), &frames[0], q, 4).unwrap();
    let one_by_one: Vec<_> = frames[1..].iter().map(|f| a.step(f).unwrap()).collect();
    assert_eq!(b.step_many(&frames[1..]).unwrap(), one_by_one);
}

#[test]
fn remote_tracker_round_trip() {
    use std::io::BufReader;
    use std::net::TcpListener;
    let scene = Scene::moving_disk(6, Point::new(2.0, 1.0));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let field: Arc<dyn MotionField> = scene.clone().into_motion_field();
    let server_field = field.clone();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        serve_tracker(Box::new(OracleTracker::new(server_field)), DEFAULT_WINDOW, &mut reader, &mut writer).unwrap();
    });
    let caps = TrackerCapabilities {
        supports_visibility: true,
        supports_midstream_queries: true,
    };
    let q = disk_queries(&scene, &OFFSETS);
    let want = run(&scene, Box::new(OracleTracker::new(field)), q.clone());
    let got = run(&scene, Box::new(SocketTracker::connect(&addr, caps).unwrap()), q);
    assert_eq!(got, want);
    server.join().unwrap();
}
