//! Segmenters behind a local socket speaking the line-delimited JSON protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;

use super::{PromptBundle, PromptModes, ProbMap, SegmenterAdapter};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::mask::BinaryMask;
use crate::protocol::{
    read_message, write_error, write_message, SegmentResponse, SegmenterRequest, TextMapResponse, WireFrame, WireMask,
    WirePrompt,
};
use crate::rle::rle_to_mask;

pub struct SocketSegmenter {
    name: String,
    modes: PromptModes,
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl SocketSegmenter {
    pub fn connect(addr: &str, modes: PromptModes) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::SegmenterBackend {
            adapter: format!("remote:{addr}"),
            message: e.to_string(),
        })?;
        stream.set_nodelay(true).ok();
        let writer = stream.try_clone().map_err(|e| Error::io(addr, e))?;
        Ok(Self {
            name: format!("remote:{addr}"),
            modes,
            reader: BufReader::new(stream),
            writer,
        })
    }

    fn closed(&self) -> Error {
        Error::SegmenterBackend {
            adapter: self.name.clone(),
            message: "connection closed".into(),
        }
    }
}

impl SegmenterAdapter for SocketSegmenter {
    fn name(&self) -> &str {
        &self.name
    }

    fn prompt_modes(&self) -> PromptModes {
        self.modes
    }

    fn predict(&mut self, image: &Frame, prompts: &[PromptBundle]) -> Result<Vec<ProbMap>> {
        let req = SegmenterRequest::Segment {
            frame: WireFrame::inline(image),
            prompts: prompts
                .iter()
                .map(|p| WirePrompt {
                    instance_id: p.instance_id,
                    points: p.positive_points.clone(),
                    bbox: p.bbox,
                    text: p.text.clone(),
                })
                .collect(),
        };
        write_message(&mut self.writer, &req)?;
        let resp: SegmentResponse = read_message(&mut self.reader)?.ok_or_else(|| self.closed())?;
        prompts
            .iter()
            .map(|p| {
                let m = resp
                    .masks
                    .iter()
                    .find(|m| m.instance_id == p.instance_id)
                    .ok_or_else(|| Error::SegmenterBackend {
                        adapter: self.name.clone(),
                        message: format!("no mask returned for instance {}", p.instance_id),
                    })?;
                Ok(ProbMap::from_mask(&rle_to_mask(&m.rle, m.height, m.width)?))
            })
            .collect()
    }

    fn text_map(&mut self, image: &Frame, text: &str) -> Result<ProbMap> {
        let req = SegmenterRequest::TextMap {
            frame: WireFrame::inline(image),
            text: text.to_string(),
        };
        write_message(&mut self.writer, &req)?;
        let resp: TextMapResponse = read_message(&mut self.reader)?.ok_or_else(|| self.closed())?;
        if resp.probs.len() != resp.height * resp.width {
            return Err(Error::SegmenterBackend {
                adapter: self.name.clone(),
                message: "text map size does not match its dimensions".into(),
            });
        }
        Ok(ProbMap {
            height: resp.height,
            width: resp.width,
            data: resp.probs,
        })
    }
}

/// Serve `adapter` over one connection until the peer hangs up.
pub fn serve_segmenter<R: BufRead, W: Write>(adapter: &mut dyn SegmenterAdapter, reader: &mut R, writer: &mut W) -> Result<()> {
    loop {
        let req: SegmenterRequest = match read_message(reader) {
            Ok(Some(r)) => r,
            Ok(None) => return Ok(()),
            Err(e) => {
                write_error(writer, &e.to_string())?;
                continue;
            }
        };
        let outcome = match req {
            SegmenterRequest::Segment { frame, prompts } => frame.to_frame().and_then(|f| {
                let bundles: Vec<PromptBundle> = prompts
                    .into_iter()
                    .map(|p| PromptBundle {
                        instance_id: p.instance_id,
                        positive_points: p.points,
                        bbox: p.bbox,
                        text: p.text,
                    })
                    .collect();
                let set = super::segment(adapter, &f, &bundles)?;
                let masks = set
                    .iter()
                    .map(|(id, m): (u32, &BinaryMask)| WireMask {
                        instance_id: id,
                        rle: m.to_rle().counts,
                        height: m.height(),
                        width: m.width(),
                    })
                    .collect();
                Ok(serde_json::to_value(SegmentResponse { masks })?)
            }),
            SegmenterRequest::TextMap { frame, text } => frame.to_frame().and_then(|f| {
                let m = adapter.text_map(&f, &text)?;
                Ok(serde_json::to_value(TextMapResponse {
                    height: m.height,
                    width: m.width,
                    probs: m.data,
                })?)
            }),
        };
        match outcome {
            Ok(v) => write_message(writer, &v)?,
            Err(e) => write_error(writer, &e.to_string())?,
        }
    }
}
