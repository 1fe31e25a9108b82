use std::sync::Arc;

use super::{MotionField, TrackerAdapter, TrackerCapabilities};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::points::{QueryPointSet, TrackedPointSet};

/// Replays a synthetic generator's exact motion.
pub struct OracleTracker {
    field: Arc<dyn MotionField>,
    queries: Vec<QueryPointSet>,
}

impl OracleTracker {
    pub fn new(field: Arc<dyn MotionField>) -> Self {
        Self {
            field,
            queries: Vec::new(),
        }
    }
}

impl TrackerAdapter for OracleTracker {
    fn name(&self) -> &str {
        "oracle"
    }

    fn capabilities(&self) -> TrackerCapabilities {
        TrackerCapabilities {
            supports_visibility: true,
            supports_midstream_queries: true,
        }
    }

    fn init(&mut self, _first_frame: &Frame, queries: &[QueryPointSet], _window_size: usize) -> Result<()> {
        self.queries = queries.to_vec();
        Ok(())
    }

    fn step(&mut self, window: &[Frame]) -> Result<Vec<TrackedPointSet>> {
        let t = window.last().ok_or_else(|| Error::invalid("empty frame window"))?.index;
        Ok(self
            .queries
            .iter()
            .map(|q| {
                let (points, visible) = q
                    .points
                    .iter()
                    .map(|p| self.field.trajectory(*p, q.birth_frame, t))
                    .unzip();
                TrackedPointSet {
                    instance_id: q.instance_id,
                    frame_index: t,
                    points,
                    visible,
                }
            })
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
