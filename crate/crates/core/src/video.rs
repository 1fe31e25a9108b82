//! Ordered frame suppliers.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::synthetic::Scene;
use crate::trackers::MotionField;

pub const DEFAULT_FPS: f64 = 25.0;

pub trait VideoSource: Send {
    /// Next frame in index order, or `None` at the end of the stream.
    fn next_frame(&mut self) -> Result<Option<Frame>>;

    /// Total frame count, when known up front.
    fn len_hint(&self) -> Option<u64> {
        None
    }

    /// Frames discarded because the consumer fell behind (live feeds only).
    fn dropped(&self) -> u64 {
        0
    }
}

/// Parse the number out of `frame_000123.png`.
pub fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.strip_prefix("frame_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.png")
}

/// Numbered PNG files (`frame_%06d.png`) in a directory, in numeric order.
/// A frame's index is the number in its file name.
pub struct ImageDirSource {
    files: VecDeque<(u64, PathBuf)>,
    total: u64,
    fps: f64,
}

impl ImageDirSource {
    pub fn open(dir: &Path, fps: f64) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if let (true, Some(n)) = (is_png, frame_number(&path)) {
                files.push((n, path));
            }
        }
        files.sort();
        Ok(Self {
            total: files.len() as u64,
            files: files.into(),
            fps,
        })
    }
}

impl VideoSource for ImageDirSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        match self.files.pop_front() {
            None => Ok(None),
            Some((n, path)) => Frame::load_png(n, n as f64 * 1000.0 / self.fps, &path).map(Some),
        }
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.total)
    }
}

/// Container files decoded by an external helper process.
///
/// The helper is run as `<program> <args...> <video path>` and must write a
/// header line `WIDTH HEIGHT FPS` to stdout followed by raw rgb24 frames.
pub struct DecodeHelperSource {
    child: Child,
    stdout: BufReader<ChildStdout>,
    height: usize,
    width: usize,
    fps: f64,
    next_index: u64,
}

impl DecodeHelperSource {
    pub fn spawn(helper: &[String], video: &Path) -> Result<Self> {
        let (program, args) = helper
            .split_first()
            .ok_or_else(|| Error::config("pipeline.decode_helper", "decode helper command is empty"))?;
        let mut child = Command::new(program)
            .args(args)
            .arg(video)
            .stdout(Stdio::piped())
            .stdin(Stdio::null())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let mut stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut header = String::new();
        stdout.read_line(&mut header).map_err(|e| Error::io(video, e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed = match fields.as_slice() {
            [w, h, fps] => w.parse::<usize>().ok().zip(h.parse::<usize>().ok()).zip(fps.parse::<f64>().ok()),
            _ => None,
        };
        let ((width, height), fps) = match parsed {
            Some(v) if v.0 .0 > 0 && v.0 .1 > 0 && v.1 > 0.0 => v,
            _ => {
                let _ = child.kill();
                return Err(Error::invalid(format!("decode helper sent a bad header: {:?}", header.trim_end())));
            }
        };
        Ok(Self {
            child,
            stdout,
            height,
            width,
            fps,
            next_index: 0,
        })
    }
}

impl VideoSource for DecodeHelperSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let mut buf = vec![0u8; self.height * self.width * 3];
        let mut filled = 0;
        while filled < buf.len() {
            let n = self
                .stdout
                .read(&mut buf[filled..])
                .map_err(|e| Error::io("<decode helper>", e))?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled == 0 {
            return Ok(None);
        }
        if filled < buf.len() {
            return Err(Error::invalid(format!("decode helper ended mid-frame ({filled} of {} bytes)", buf.len())));
        }
        let idx = self.next_index;
        self.next_index += 1;
        Frame::new(idx, idx as f64 * 1000.0 / self.fps, self.height, self.width, buf).map(Some)
    }
}

impl Drop for DecodeHelperSource {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Rendered synthetic scene.
pub struct SyntheticSource {
    scene: Scene,
    next: u64,
}

impl SyntheticSource {
    pub fn new(scene: Scene) -> Self {
        Self { scene, next: 0 }
    }
}

impl VideoSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.next >= self.scene.frames {
            return Ok(None);
        }
        let f = self.scene.render(self.next);
        self.next += 1;
        Ok(Some(f))
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.scene.frames)
    }
}

/// Frames already in memory.
pub struct VecSource {
    frames: VecDeque<Frame>,
    total: u64,
}

impl VecSource {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self {
            total: frames.len() as u64,
            frames: frames.into(),
        }
    }
}

impl VideoSource for VecSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        Ok(self.frames.pop_front())
    }

    fn len_hint(&self) -> Option<u64> {
        Some(self.total)
    }
}

#[derive(Default)]
struct LiveState {
    pending: Option<Frame>,
    dropped: u64,
    closed: bool,
}

/// Live feed with a one-slot buffer: a frame pushed before the consumer
/// took the previous one replaces it and counts as dropped.
#[derive(Clone, Default)]
pub struct LiveFeed {
    shared: Arc<(Mutex<LiveState>, Condvar)>,
}

impl LiveFeed {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, frame: Frame) {
        let (lock, cv) = &*self.shared;
        let mut st = lock.lock().expect("live feed lock");
        if st.pending.replace(frame).is_some() {
            st.dropped += 1;
        }
        cv.notify_all();
    }

    pub fn close(&self) {
        let (lock, cv) = &*self.shared;
        lock.lock().expect("live feed lock").closed = true;
        cv.notify_all();
    }

    pub fn dropped_count(&self) -> u64 {
        self.shared.0.lock().expect("live feed lock").dropped
    }
}

impl VideoSource for LiveFeed {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        let (lock, cv) = &*self.shared;
        let mut st = lock.lock().expect("live feed lock");
        loop {
            if let Some(f) = st.pending.take() {
                return Ok(Some(f));
            }
            if st.closed {
                return Ok(None);
            }
            st = cv.wait(st).expect("live feed lock");
        }
    }

    fn dropped(&self) -> u64 {
        self.dropped_count()
    }
}

/// A source plus, for synthetic scenes, the analytic motion field.
pub struct OpenedVideo {
    pub source: Box<dyn VideoSource>,
    pub motion: Option<Arc<dyn MotionField>>,
    pub scene: Option<Scene>,
}

/// Open `path` by kind: a directory of numbered PNGs, a synthetic scene
/// description (`.json`), or any other file through the decode helper.
pub fn open_video(path: &Path, fps: f64, decode_helper: Option<&[String]>) -> Result<OpenedVideo> {
    if !path.exists() {
        return Err(Error::invalid(format!("video {} does not exist", path.display())));
    }
    if path.is_dir() {
        return Ok(OpenedVideo {
            source: Box::new(ImageDirSource::open(path, fps)?),
            motion: None,
            scene: None,
        });
    }
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let scene = Scene::from_json_file(path)?;
        return Ok(OpenedVideo {
            source: Box::new(SyntheticSource::new(scene.clone())),
            motion: Some(Arc::new(scene.clone())),
            scene: Some(scene),
        });
    }
    let helper = decode_helper.ok_or_else(|| {
        Error::config(
            "pipeline.decode_helper",
            format!("{} is a container file; configure a decode helper", path.display()),
        )
    })?;
    Ok(OpenedVideo {
        source: Box::new(DecodeHelperSource::spawn(helper, path)?),
        motion: None,
        scene: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn frame_numbers() {
        assert_eq!(frame_number(Path::new("a/frame_000012.png")), Some(12));
        assert_eq!(frame_number(Path::new("frame_.png")), None);
        assert_eq!(frame_number(Path::new("img_000001.png")), None);
        assert_eq!(frame_file_name(7), "frame_000007.png");
    }

    #[test]
    fn image_dir_in_numeric_order() {
        let dir = tempfile::tempdir().unwrap();
        let scene = Scene::moving_disk(3, Point::new(1.0, 0.0));
        for t in [2u64, 0, 1] {
            scene.render(t).to_rgb_image().save(dir.path().join(frame_file_name(t))).unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let mut src = ImageDirSource::open(dir.path(), 25.0).unwrap();
        assert_eq!(src.len_hint(), Some(3));
        for t in 0..3 {
            let f = src.next_frame().unwrap().unwrap();
            assert_eq!(f.index, t);
            assert_eq!(f.pixels(), scene.render(t).pixels());
            assert!((f.timestamp_ms - 40.0 * t as f64).abs() < 1e-9);
        }
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn live_feed_keeps_newest() {
        let mut feed = LiveFeed::new();
        let pusher = feed.clone();
        for i in 0..4 {
            pusher.push(Frame::from_gray(i, 1, 1, &[i as u8]).unwrap());
        }
        assert_eq!(feed.next_frame().unwrap().unwrap().index, 3);
        assert_eq!(feed.dropped(), 3);
        pusher.close();
        assert!(feed.next_frame().unwrap().is_none());
    }

    #[test]
    fn decode_helper_stream() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("helper.sh");
        // two 1x2 frames
        std::fs::write(&script, "#!/bin/sh\nprintf '2 1 10\\n'\nprintf 'abcdefghijkl'\n").unwrap();
        let video = dir.path().join("clip.mp4");
        std::fs::write(&video, b"").unwrap();
        let helper = vec!["sh".to_string(), script.display().to_string()];
        let mut src = open_video(&video, 25.0, Some(&helper)).unwrap().source;
        let a = src.next_frame().unwrap().unwrap();
        let b = src.next_frame().unwrap().unwrap();
        assert_eq!(a.pixels(), b"abcdef");
        assert_eq!((b.index, b.timestamp_ms), (1, 100.0));
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn missing_video_and_missing_helper() {
        assert!(matches!(
            open_video(Path::new("/nonexistent/clip"), 25.0, None),
            Err(Error::InvalidArgument(_))
        ));
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(matches!(open_video(f.path(), 25.0, None), Err(Error::Config { .. })));
    }
}
