//! Online point tracking behind a pluggable adapter.
//!
//! A [`TrackerSession`] owns the adapter, the query sets and a bounded
//! window of the most recent frames, and enforces the streaming contract:
//! strictly increasing frame indices, one tracked set per live instance per
//! frame, stable point order.

mod ncc;
mod oracle;
mod remote;
mod stub;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub use ncc::{NccConfig, NccTracker};
pub use oracle::OracleTracker;
pub use remote::{serve_tracker, SocketTracker};
pub use stub::StaticTracker;

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::Point;
use crate::points::{QueryPointSet, TrackedPointSet};

pub const DEFAULT_WINDOW: usize = 4;

/// Analytic trajectories for synthetic data: where a point born at `birth`
/// is at frame `t`, and whether it is visible there.
pub trait MotionField: Send + Sync {
    fn trajectory(&self, p: Point, birth: u64, t: u64) -> (Point, bool);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerCapabilities {
    pub supports_visibility: bool,
    pub supports_midstream_queries: bool,
}

pub trait TrackerAdapter: Send {
    fn name(&self) -> &str;

    fn capabilities(&self) -> TrackerCapabilities;

    fn init(&mut self, first_frame: &Frame, queries: &[QueryPointSet], window_size: usize) -> Result<()>;

    /// Track every live instance into the newest frame of `window`
    /// (oldest first). Must return one set per instance, in the order the
    /// instances were registered.
    fn step(&mut self, window: &[Frame]) -> Result<Vec<TrackedPointSet>>;

    fn add_queries(&mut self, queries: &[QueryPointSet], at_frame: &Frame) -> Result<()>;

    /// Stop tracking these instances. Adapters that cannot forget may keep
    /// tracking; the session filters their output.
    fn drop_instances(&mut self, _ids: &[u32]) -> Result<()> {
        Ok(())
    }

    /// Peak device memory reported by the backend, if it can tell.
    fn peak_memory_bytes(&self) -> Option<u64> {
        None
    }
}

pub struct TrackerSession {
    adapter: Box<dyn TrackerAdapter>,
    window_size: usize,
    query_sets: Vec<QueryPointSet>,
    frame_buffer: VecDeque<Frame>,
    last_index: u64,
    dropped: BTreeSet<u32>,
}

impl std::fmt::Debug for TrackerSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrackerSession")
            .field("adapter", &self.adapter.name())
            .field("window_size", &self.window_size)
            .field("instances", &self.query_sets.len())
            .field("last_index", &self.last_index)
            .finish()
    }
}

impl TrackerSession {
    /// Open a session on `first_frame`. Returns the session and the tracked
    /// sets for the birth frame, which equal the queries, all visible.
    pub fn init(
        mut adapter: Box<dyn TrackerAdapter>,
        first_frame: &Frame,
        queries: Vec<QueryPointSet>,
        window_size: usize,
    ) -> Result<(Self, Vec<TrackedPointSet>)> {
        if window_size == 0 {
            return Err(Error::invalid("window size must be positive"));
        }
        if queries.is_empty() {
            return Err(Error::invalid("tracker needs at least one query set"));
        }
        validate_new_queries(&queries, &[], first_frame)?;
        let name = adapter.name().to_string();
        adapter
            .init(first_frame, &queries, window_size)
            .map_err(|e| backend_error(&name, e))?;
        let initial = queries
            .iter()
            .map(|q| TrackedPointSet::all_visible(q.instance_id, first_frame.index, q.points.clone()))
            .collect();
        let mut frame_buffer = VecDeque::with_capacity(window_size);
        frame_buffer.push_back(first_frame.clone());
        Ok((
            Self {
                adapter,
                window_size,
                query_sets: queries,
                frame_buffer,
                last_index: first_frame.index,
                dropped: BTreeSet::new(),
            },
            initial,
        ))
    }

    pub fn name(&self) -> &str {
        self.adapter.name()
    }

    pub fn capabilities(&self) -> TrackerCapabilities {
        self.adapter.capabilities()
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn buffered_frames(&self) -> usize {
        self.frame_buffer.len()
    }

    pub fn last_index(&self) -> u64 {
        self.last_index
    }

    /// Query sets of instances still being tracked.
    pub fn query_sets(&self) -> impl Iterator<Item = &QueryPointSet> {
        self.query_sets.iter().filter(|q| !self.dropped.contains(&q.instance_id))
    }

    /// Close the session and hand back the adapter, e.g. to re-init it.
    pub fn into_adapter(self) -> Box<dyn TrackerAdapter> {
        self.adapter
    }

    pub fn peak_memory_bytes(&self) -> Option<u64> {
        self.adapter.peak_memory_bytes()
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Vec<TrackedPointSet>> {
        if frame.index <= self.last_index {
            return Err(Error::Ordering {
                last: self.last_index,
                got: frame.index,
            });
        }
        if let Some(prev) = self.frame_buffer.back() {
            if (prev.height(), prev.width()) != (frame.height(), frame.width()) {
                return Err(Error::invalid(format!(
                    "frame {} is {}x{}, earlier frames are {}x{}",
                    frame.index,
                    frame.height(),
                    frame.width(),
                    prev.height(),
                    prev.width()
                )));
            }
        }
        if self.frame_buffer.len() == self.window_size {
            self.frame_buffer.pop_front();
        }
        self.frame_buffer.push_back(frame.clone());
        self.last_index = frame.index;
        let name = self.adapter.name().to_string();
        let raw = self
            .adapter
            .step(self.frame_buffer.make_contiguous())
            .map_err(|e| backend_error(&name, e))?;
        self.check_output(raw, frame)
    }

    /// Feed several frames; equivalent to calling [`step`](Self::step) on each.
    pub fn step_many(&mut self, frames: &[Frame]) -> Result<Vec<Vec<TrackedPointSet>>> {
        frames.iter().map(|f| self.step(f)).collect()
    }

    /// Register new instances at the most recent frame.
    pub fn add_queries(&mut self, new_queries: Vec<QueryPointSet>, at_frame: &Frame) -> Result<()> {
        if !self.capabilities().supports_midstream_queries {
            return Err(Error::Capability(format!(
                "tracker `{}` cannot add queries mid-stream",
                self.name()
            )));
        }
        if at_frame.index != self.last_index {
            return Err(Error::invalid(format!(
                "queries must be added at the latest frame {}, got {}",
                self.last_index, at_frame.index
            )));
        }
        validate_new_queries(&new_queries, &self.query_sets, at_frame)?;
        let name = self.adapter.name().to_string();
        self.adapter
            .add_queries(&new_queries, at_frame)
            .map_err(|e| backend_error(&name, e))?;
        self.query_sets.extend(new_queries);
        Ok(())
    }

    pub fn drop_instances(&mut self, ids: &[u32]) -> Result<()> {
        let name = self.adapter.name().to_string();
        self.adapter.drop_instances(ids).map_err(|e| backend_error(&name, e))?;
        self.dropped.extend(ids.iter().copied());
        Ok(())
    }

    fn check_output(&self, raw: Vec<TrackedPointSet>, frame: &Frame) -> Result<Vec<TrackedPointSet>> {
        let live: Vec<&QueryPointSet> = self.query_sets().collect();
        let mut out = Vec::with_capacity(live.len());
        let mut it = raw.into_iter().filter(|t| !self.dropped.contains(&t.instance_id));
        for q in live {
            let mut t = it.next().filter(|t| t.instance_id == q.instance_id).ok_or_else(|| {
                Error::TrackerBackend {
                    adapter: self.name().to_string(),
                    message: format!("missing or misordered output for instance {}", q.instance_id),
                }
            })?;
            if t.points.len() != q.points.len() || t.visible.len() != q.points.len() {
                return Err(Error::TrackerBackend {
                    adapter: self.name().to_string(),
                    message: format!("instance {} returned {} points, expected {}", q.instance_id, t.points.len(), q.points.len()),
                });
            }
            if t.points.iter().any(|p| !p.is_finite()) {
                return Err(Error::TrackerBackend {
                    adapter: self.name().to_string(),
                    message: format!("instance {} returned a non-finite position", q.instance_id),
                });
            }
            // a point outside the frame cannot be visible
            for (p, v) in t.points.iter().zip(t.visible.iter_mut()) {
                *v &= p.in_bounds(frame.height(), frame.width());
            }
            t.frame_index = frame.index;
            out.push(t);
        }
        Ok(out)
    }
}

fn validate_new_queries(new: &[QueryPointSet], existing: &[QueryPointSet], frame: &Frame) -> Result<()> {
    let mut ids: BTreeSet<u32> = existing.iter().map(|q| q.instance_id).collect();
    for q in new {
        q.validate(frame.height(), frame.width())?;
        if !ids.insert(q.instance_id) {
            return Err(Error::invalid(format!("instance id {} is already tracked", q.instance_id)));
        }
    }
    Ok(())
}

fn backend_error(adapter: &str, e: Error) -> Error {
    match e {
        e @ (Error::TrackerBackend { .. } | Error::InvalidArgument(_) | Error::Capability(_) | Error::Ordering { .. }) => e,
        other => Error::TrackerBackend {
            adapter: adapter.to_string(),
            message: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests;
