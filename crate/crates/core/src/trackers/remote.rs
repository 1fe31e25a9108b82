//! Trackers behind a local socket speaking the line-delimited JSON protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use super::{TrackerAdapter, TrackerCapabilities};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::points::{QueryPointSet, TrackedPointSet};
use crate::protocol::{read_message, write_error, write_message, TrackerOp, TrackerRequest, TrackerResponse, WireFrame};

/// Client side. The wire protocol carries flat point lists, so the adapter
/// keeps the instance layout (ids and point counts, in registration order)
/// and splits responses locally.
pub struct SocketTracker {
    name: String,
    caps: TrackerCapabilities,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    layout: Vec<(u32, usize)>,
}

impl SocketTracker {
    pub fn connect(addr: &str, caps: TrackerCapabilities) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::TrackerBackend {
            adapter: format!("remote:{addr}"),
            message: e.to_string(),
        })?;
        stream.set_nodelay(true).ok();
        let writer = stream.try_clone().map_err(|e| Error::io(addr, e))?;
        Ok(Self {
            name: format!("remote:{addr}"),
            caps,
            reader: BufReader::new(stream),
            writer,
            layout: Vec::new(),
        })
    }

    fn call(&mut self, op: TrackerOp, frame: &Frame, points: Vec<crate::geometry::Point>) -> Result<TrackerResponse> {
        let req = TrackerRequest {
            op,
            frame: WireFrame::inline(frame),
            points,
        };
        write_message(&mut self.writer, &req)?;
        let resp: TrackerResponse = read_message(&mut self.reader)?.ok_or_else(|| Error::TrackerBackend {
            adapter: self.name.clone(),
            message: "connection closed".into(),
        })?;
        if resp.points.len() != resp.visible.len() {
            return Err(Error::TrackerBackend {
                adapter: self.name.clone(),
                message: "points and visible differ in length".into(),
            });
        }
        Ok(resp)
    }

    fn flatten(queries: &[QueryPointSet]) -> Vec<crate::geometry::Point> {
        queries.iter().flat_map(|q| q.points.iter().copied()).collect()
    }
}

impl TrackerAdapter for SocketTracker {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> TrackerCapabilities {
        self.caps
    }

    fn init(&mut self, first_frame: &Frame, queries: &[QueryPointSet], _window_size: usize) -> Result<()> {
        self.layout = queries.iter().map(|q| (q.instance_id, q.points.len())).collect();
        self.call(TrackerOp::Init, first_frame, Self::flatten(queries))?;
        Ok(())
    }

    fn step(&mut self, window: &[Frame]) -> Result<Vec<TrackedPointSet>> {
        let frame = window.last().ok_or_else(|| Error::invalid("empty frame window"))?;
        let resp = self.call(TrackerOp::Step, frame, Vec::new())?;
        let expected: usize = self.layout.iter().map(|(_, n)| n).sum();
        if resp.points.len() != expected {
            return Err(Error::TrackerBackend {
                adapter: self.name.clone(),
                message: format!("expected {expected} points, got {}", resp.points.len()),
            });
        }
        let mut out = Vec::with_capacity(self.layout.len());
        let mut offset = 0;
        for &(id, n) in &self.layout {
            out.push(TrackedPointSet {
                instance_id: id,
                frame_index: frame.index,
                points: resp.points[offset..offset + n].to_vec(),
                visible: resp.visible[offset..offset + n].to_vec(),
            });
            offset += n;
        }
        Ok(out)
    }

    fn add_queries(&mut self, queries: &[QueryPointSet], at_frame: &Frame) -> Result<()> {
        if !self.caps.supports_midstream_queries {
            return Err(Error::Capability(format!("{} does not accept mid-stream queries", self.name)));
        }
        self.call(TrackerOp::Add, at_frame, Self::flatten(queries))?;
        self.layout.extend(queries.iter().map(|q| (q.instance_id, q.points.len())));
        Ok(())
    }
}

/// Server side: drive an in-process adapter from protocol messages until
/// the peer closes the stream. Each `init`/`add` call registers one instance.
pub fn serve_tracker<R: BufRead, W: Write>(
    mut adapter: Box<dyn TrackerAdapter>,
    window_size: usize,
    reader: &mut R,
    writer: &mut W,
) -> Result<()> {
    let mut window: Vec<Frame> = Vec::new();
    let mut next_id = 0u32;
    while let Some(req) = read_message::<_, TrackerRequest>(reader)? {
        let frame = match req.frame.to_frame() {
            Ok(f) => f,
            Err(e) => {
                write_error(writer, &e.to_string())?;
                continue;
            }
        };
        let result = match req.op {
            TrackerOp::Init | TrackerOp::Add => {
                let q = QueryPointSet::new(next_id, req.points.clone(), frame.index);
                next_id += 1;
                let r = if req.op == TrackerOp::Init {
                    window = vec![frame.clone()];
                    adapter.init(&frame, std::slice::from_ref(&q), window_size)
                } else {
                    adapter.add_queries(std::slice::from_ref(&q), &frame)
                };
                r.map(|_| TrackerResponse {
                    visible: vec![true; req.points.len()],
                    points: req.points,
                })
            }
            TrackerOp::Step => {
                if window.len() == window_size.max(1) {
                    window.remove(0);
                }
                window.push(frame);
                adapter.step(&window).map(|sets| {
                    let mut points = Vec::new();
                    let mut visible = Vec::new();
                    for s in sets {
                        points.extend(s.points);
                        visible.extend(s.visible);
                    }
                    TrackerResponse { points, visible }
                })
            }
        };
        match result {
            Ok(resp) => write_message(writer, &resp)?,
            Err(e) => write_error(writer, &e.to_string())?,
        }
    }
    Ok(())
}
