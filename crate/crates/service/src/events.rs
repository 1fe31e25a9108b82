//! Versioned event schema and the per-session event log.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tapseg_core::pipeline::FrameRecord;
use tokio::sync::watch;

use crate::session::SessionState;

/// Schema version carried by every event as `"v"`.
pub const EVENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    /// Masks and tracked points for one processed frame.
    Frame {
        #[serde(flatten)]
        record: FrameRecord,
        /// Live frames skipped so far because the pipeline fell behind.
        dropped_count: u64,
    },
    State {
        state: SessionState,
    },
    Error {
        #[serde(skip_serializing_if = "Option::is_none")]
        frame_index: Option<u64>,
        kind: String,
        message: String,
    },
}

/// An event as sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub v: u32,
    /// Position in the session's stream, gapless from 0.
    pub seq: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub body: EventBody,
}

struct LogInner {
    /// Sequence number of `events[0]`.
    base: u64,
    events: VecDeque<Arc<str>>,
    closed: bool,
}

/// Append-only event log with a bounded replay window.
pub struct EventLog {
    session_id: String,
    capacity: usize,
    inner: Mutex<LogInner>,
    /// Publishes the next sequence number and whether the log is closed.
    tick: watch::Sender<(u64, bool)>,
}

/// Result of reading the log from some sequence number.
pub enum Replay {
    Events(Vec<Arc<str>>),
    /// The requested events were evicted; the oldest retained seq is given.
    Evicted(u64),
}

impl EventLog {
    pub fn new(session_id: String, capacity: usize) -> Self {
        EventLog {
            session_id,
            capacity: capacity.max(1),
            inner: Mutex::new(LogInner {
                base: 0,
                events: VecDeque::new(),
                closed: false,
            }),
            tick: watch::channel((0, false)).0,
        }
    }

    pub fn push(&self, body: EventBody) -> u64 {
        let mut inner = self.inner.lock().expect("event log lock");
        let seq = inner.base + inner.events.len() as u64;
        let ev = Event {
            v: EVENT_VERSION,
            seq,
            session_id: self.session_id.clone(),
            body,
        };
        inner
            .events
            .push_back(serde_json::to_string(&ev).expect("events serialize").into());
        if inner.events.len() > self.capacity {
            inner.events.pop_front();
            inner.base += 1;
        }
        let closed = inner.closed;
        drop(inner);
        self.tick.send_replace((seq + 1, closed));
        seq
    }

    /// Mark the stream complete; readers finish after draining it.
    pub fn close(&self) {
        let mut inner = self.inner.lock().expect("event log lock");
        inner.closed = true;
        let next = inner.base + inner.events.len() as u64;
        drop(inner);
        self.tick.send_replace((next, true));
    }

    pub fn len(&self) -> u64 {
        let inner = self.inner.lock().expect("event log lock");
        inner.base + inner.events.len() as u64
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().expect("event log lock").closed
    }

    /// Events with sequence number `>= from`.
    pub fn read_from(&self, from: u64) -> Replay {
        let inner = self.inner.lock().expect("event log lock");
        if from < inner.base {
            return Replay::Evicted(inner.base);
        }
        let skip = (from - inner.base) as usize;
        Replay::Events(inner.events.iter().skip(skip).cloned().collect())
    }

    pub fn subscribe(&self) -> watch::Receiver<(u64, bool)> {
        self.tick.subscribe()
    }
}
