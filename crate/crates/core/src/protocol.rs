//! Newline-delimited JSON messages for adapters running out of process.
//!
//! Tracker: `{"op": "init"|"step"|"add", "frame": {...}, "points": [[x, y], ...]}`
//! answered by `{"points": [[x, y], ...], "visible": [bool, ...]}`.
//!
//! Segmenter: `{"op": "segment", "frame": {...}, "prompts": [{"instance_id", "points", "box", "text"}]}`
//! answered by `{"masks": [{"instance_id", "rle", "height", "width"}]}`, and
//! `{"op": "text_map", "frame": {...}, "text": "..."}` answered by
//! `{"height", "width", "probs": [...]}`.
//!
//! Either side may answer `{"error": "..."}` instead.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{BoxPrompt, Point};

/// A frame on the wire: inline base64 RGB or a path both sides can read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub index: u64,
    pub height: usize,
    pub width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl WireFrame {
    pub fn inline(frame: &Frame) -> Self {
        Self {
            index: frame.index,
            height: frame.height(),
            width: frame.width(),
            rgb: Some(B64.encode(frame.pixels())),
            path: None,
        }
    }

    pub fn to_frame(&self) -> Result<Frame> {
        let frame = match (&self.rgb, &self.path) {
            (Some(data), _) => {
                let bytes = B64
                    .decode(data)
                    .map_err(|e| Error::invalid(format!("bad base64 frame payload: {e}")))?;
                Frame::new(self.index, 0.0, self.height, self.width, bytes)?
            }
            (None, Some(path)) => Frame::load_png(self.index, 0.0, path)?,
            (None, None) => return Err(Error::invalid("wire frame carries neither rgb nor path")),
        };
        if frame.hw() != (self.height, self.width) {
            return Err(Error::invalid("wire frame dimensions do not match its payload"));
        }
        Ok(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackerOp {
    Init,
    Step,
    Add,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerRequest {
    pub op: TrackerOp,
    pub frame: WireFrame,
    #[serde(default)]
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerResponse {
    pub points: Vec<Point>,
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePrompt {
    pub instance_id: u32,
    #[serde(default)]
    pub points: Vec<Point>,
    #[serde(default, rename = "box")]
    pub bbox: Option<BoxPrompt>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum SegmenterRequest {
    Segment { frame: WireFrame, prompts: Vec<WirePrompt> },
    TextMap { frame: WireFrame, text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMask {
    pub instance_id: u32,
    pub rle: Vec<u64>,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub masks: Vec<WireMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextMapResponse {
    pub height: usize,
    pub width: usize,
    pub probs: Vec<f32>,
}

#[derive(Debug, Deserialize)]
struct ErrorReply {
    error: String,
}

/// Write one message as a single JSON line.
pub fn write_message<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<()> {
    let line = serde_json::to_string(msg)?;
    w.write_all(line.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io("<adapter socket>", e))
}

/// Read one JSON line; `Ok(None)` on clean end of stream.
pub fn read_message<R: BufRead, T: DeserializeOwned>(r: &mut R) -> Result<Option<T>> {
    let mut line = String::new();
    let n = r.read_line(&mut line).map_err(|e| Error::io("<adapter socket>", e))?;
    if n == 0 {
        return Ok(None);
    }
    if let Ok(err) = serde_json::from_str::<ErrorReply>(&line) {
        return Err(Error::invalid(format!("remote adapter error: {}", err.error)));
    }
    Ok(Some(serde_json::from_str(&line)?))
}

pub fn write_error<W: Write>(w: &mut W, message: &str) -> Result<()> {
    write_message(w, &serde_json::json!({ "error": message }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_frame_round_trip() {
        let f = Frame::new(3, 0.0, 2, 2, (0..12).collect()).unwrap();
        let w = WireFrame::inline(&f);
        let g = w.to_frame().unwrap();
        assert_eq!(g.pixels(), f.pixels());
        assert_eq!(g.index, 3);
    }

    #[test]
    fn request_shapes() {
        let f = Frame::new(0, 0.0, 1, 1, vec![1, 2, 3]).unwrap();
        let req = TrackerRequest {
            op: TrackerOp::Init,
            frame: WireFrame::inline(&f),
            points: vec![Point::new(0.5, 0.5)],
        };
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["op"], "init");
        assert_eq!(v["points"], serde_json::json!([[0.5, 0.5]]));
        assert_eq!(v["frame"]["height"], 1);

        let seg = SegmenterRequest::Segment {
            frame: WireFrame::inline(&f),
            prompts: vec![WirePrompt {
                instance_id: 2,
                points: vec![],
                bbox: Some(BoxPrompt::new(0.0, 0.0, 1.0, 1.0).unwrap()),
                text: None,
            }],
        };
        let v = serde_json::to_value(&seg).unwrap();
        assert_eq!(v["op"], "segment");
        assert_eq!(v["prompts"][0]["box"], serde_json::json!([0.0, 0.0, 1.0, 1.0]));
        assert!(v["prompts"][0]["text"].is_null());
    }

    #[test]
    fn error_reply_surfaces() {
        let mut input = std::io::Cursor::new(b"{\"error\": \"boom\"}\n".to_vec());
        let r: Result<Option<TrackerResponse>> = read_message(&mut input);
        assert!(r.unwrap_err().to_string().contains("boom"));
    }
}
