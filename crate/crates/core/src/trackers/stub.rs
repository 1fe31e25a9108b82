use std::time::Duration;

use super::{TrackerAdapter, TrackerCapabilities};
use crate::error::Result;
use crate::frame::Frame;
use crate::points::{QueryPointSet, TrackedPointSet};

/// Reports every point where it was born, optionally sleeping per step.
/// Useful as a constant-cost stand-in when benchmarking the harness itself.
pub struct StaticTracker {
    queries: Vec<QueryPointSet>,
    cost: Duration,
    midstream: bool,
}

impl StaticTracker {
    pub fn new(cost: Duration) -> Self {
        Self {
            queries: Vec::new(),
            cost,
            midstream: true,
        }
    }

    /// Declare no mid-stream query support, forcing callers onto their fallback.
    pub fn without_midstream(mut self) -> Self {
        self.midstream = false;
        self
    }
}

impl TrackerAdapter for StaticTracker {
    fn name(&self) -> &str {
        "static"
    }

    fn capabilities(&self) -> TrackerCapabilities {
        TrackerCapabilities {
            supports_visibility: false,
            supports_midstream_queries: self.midstream,
        }
    }

    fn init(&mut self, _first_frame: &Frame, queries: &[QueryPointSet], _window_size: usize) -> Result<()> {
        self.queries = queries.to_vec();
        Ok(())
    }

    fn step(&mut self, window: &[Frame]) -> Result<Vec<TrackedPointSet>> {
        if !self.cost.is_zero() {
            std::thread::sleep(self.cost);
        }
        let t = window.last().map(|f| f.index).unwrap_or_default();
        Ok(self
            .queries
            .iter()
            .map(|q| TrackedPointSet::all_visible(q.instance_id, t, q.points.clone()))
            .collect())
    }

    fn add_queries(&mut self, queries: &[QueryPointSet], _at_frame: &Frame) -> Result<()> {
        self.queries.extend_from_slice(queries);
        Ok(())
    }

    fn drop_instances(&mut self, ids: &[u32]) -> Result<()> {
        self.queries.retain(|q| !ids.contains(&q.instance_id));
        Ok(())
    }
}
