//! Track-then-prompt video segmentation: initial masks, query sampling,
//! per-frame tracking, visibility-filtered prompting, re-initialisation and
//! mid-stream instance addition.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::geometry::{BoxPrompt, Point};
use crate::mask::{BinaryMask, InstanceMaskSet};
use crate::points::{QueryPointSet, TrackedPointSet};
use crate::registry::{SegmenterSpec, TrackerSpec};
use crate::sampling::{sample_instance, sample_query_points, ManualPoints, SamplingStrategy, StrategyKind};
use crate::segmenters::{
    init_mask_from_box, init_mask_from_text, segment, PromptBundle, SegmenterAdapter, DEFAULT_TEXT_PROMPT, MASK_THRESHOLD,
};
use crate::stats::LatencyStats;
use crate::trackers::{TrackerAdapter, TrackerSession, DEFAULT_WINDOW};
use crate::video::VideoSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Text,
    Box,
    Points,
    MaskFile,
}

/// Offline processes every frame; live sources drop to the newest frame
/// when the pipeline falls behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Offline,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub strategy: SamplingStrategy,
    pub tracker: TrackerSpec,
    pub segmenter: SegmenterSpec,
    pub init_mode: InitMode,
    pub min_visible_points: usize,
    pub reinit_patience_frames: usize,
    pub window_size: usize,
    pub text_threshold: f32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            strategy: SamplingStrategy::default(),
            tracker: TrackerSpec::default(),
            segmenter: SegmenterSpec::default(),
            init_mode: InitMode::Points,
            min_visible_points: 2,
            reinit_patience_frames: 3,
            window_size: DEFAULT_WINDOW,
            text_threshold: MASK_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.strategy.validate()?;
        self.tracker.validate()?;
        self.segmenter.validate()?;
        if self.min_visible_points < 1 {
            return Err(Error::config("pipeline.min_visible_points", "must be at least 1"));
        }
        if self.reinit_patience_frames < 1 {
            return Err(Error::config("pipeline.reinit_patience_frames", "must be at least 1"));
        }
        if self.window_size < 1 {
            return Err(Error::config("pipeline.window_size", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.text_threshold) {
            return Err(Error::config("pipeline.text_threshold", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// What seeds the first frame.
#[derive(Debug, Clone, PartialEq)]
pub enum InitInput {
    Text(String),
    Boxes(Vec<BoxPrompt>),
    /// User clicks per instance; they become the query points verbatim.
    Points(Vec<ManualPoints>),
    Masks(InstanceMaskSet),
}

impl InitInput {
    pub fn mode(&self) -> InitMode {
        match self {
            InitInput::Text(_) => InitMode::Text,
            InitInput::Boxes(_) => InitMode::Box,
            InitInput::Points(_) => InitMode::Points,
            InitInput::Masks(_) => InitMode::MaskFile,
        }
    }

    pub fn default_text() -> Self {
        InitInput::Text(DEFAULT_TEXT_PROMPT.into())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub track_ms: f64,
    pub segment_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineEvent {
    /// Points of an instance were re-sampled on its last non-empty mask.
    Reinitialized {
        instance_id: u32,
        points: usize,
        session_restarted: bool,
    },
    InstanceAdded {
        instance_id: u32,
        at_frame: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub masks: InstanceMaskSet,
    /// One set per instance, ascending instance id.
    pub tracked: Vec<TrackedPointSet>,
    pub prompts_used: Vec<PromptBundle>,
    pub timings: StageTimings,
    pub events: Vec<PipelineEvent>,
}

/// Serialized form of a [`FrameResult`]. Timings are optional so that mask
/// streams can be compared byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub height: usize,
    pub width: usize,
    /// Instance id to RLE counts.
    pub masks: BTreeMap<u32, Vec<u64>>,
    pub tracked: Vec<TrackedPointSet>,
    pub prompts_used: Vec<PromptBundle>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<PipelineEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl FrameResult {
    pub fn to_record(&self, with_timings: bool) -> FrameRecord {
        let rec = self.masks.to_record();
        FrameRecord {
            frame_index: self.frame_index,
            height: rec.height,
            width: rec.width,
            masks: rec.masks,
            tracked: self.tracked.clone(),
            prompts_used: self.prompts_used.clone(),
            events: self.events.clone(),
            timings: with_timings.then_some(self.timings),
        }
    }
}

impl FrameRecord {
    pub fn masks(&self) -> Result<InstanceMaskSet> {
        InstanceMaskSet::from_record(&crate::mask::MaskSetRecord {
            frame_index: self.frame_index,
            height: self.height,
            width: self.width,
            masks: self.masks.clone(),
        })
    }
}

struct InstanceState {
    track_id: u32,
    last_mask: BinaryMask,
    low_visible_streak: usize,
    last_points: Vec<Point>,
}

pub struct PipelineSession {
    config: PipelineConfig,
    tracker: Option<TrackerSession>,
    segmenter: Box<dyn SegmenterAdapter>,
    instances: BTreeMap<u32, InstanceState>,
    track_owner: BTreeMap<u32, u32>,
    next_track_id: u32,
    next_instance_id: u32,
    current: Frame,
    pending_events: Vec<PipelineEvent>,
}

impl std::fmt::Debug for PipelineSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PipelineSession")
            .field("tracker", &self.tracker)
            .field("segmenter", &self.segmenter.name())
            .field("instances", &self.instances.keys().collect::<Vec<_>>())
            .field("current_frame", &self.current.index)
            .finish()
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn clamp_into(p: Point, h: usize, w: usize) -> Point {
    let x = if p.x.is_finite() { p.x.clamp(0.5, w as f64 - 0.5) } else { w as f64 / 2.0 };
    let y = if p.y.is_finite() { p.y.clamp(0.5, h as f64 - 0.5) } else { h as f64 / 2.0 };
    Point::new(x, y)
}

impl PipelineSession {
    /// Pull the first frame from `video` and initialise on it.
    pub fn initialize(
        video: &mut dyn VideoSource,
        tracker: Box<dyn TrackerAdapter>,
        segmenter: Box<dyn SegmenterAdapter>,
        init: InitInput,
        config: PipelineConfig,
    ) -> Result<(Self, FrameResult)> {
        let first = video
            .next_frame()?
            .ok_or_else(|| Error::invalid("video yields no frames"))?;
        Self::initialize_on(&first, tracker, segmenter, init, config)
    }

    pub fn initialize_on(
        first: &Frame,
        tracker: Box<dyn TrackerAdapter>,
        mut segmenter: Box<dyn SegmenterAdapter>,
        init: InitInput,
        config: PipelineConfig,
    ) -> Result<(Self, FrameResult)> {
        let started = Instant::now();
        config.validate()?;
        if init.mode() != config.init_mode {
            return Err(Error::invalid(format!(
                "init input is {:?} but init_mode is {:?}",
                init.mode(),
                config.init_mode
            )));
        }
        let (h, w) = first.hw();
        let seg_started = Instant::now();
        let (masks, prompts_used, clicks) = match init {
            InitInput::Text(text) => {
                let masks = init_mask_from_text(segmenter.as_mut(), first, &text, config.text_threshold)?;
                let prompts = masks.ids().map(|id| PromptBundle::text(id, text.clone())).collect();
                (masks, prompts, None)
            }
            InitInput::Boxes(boxes) => {
                if boxes.is_empty() {
                    return Err(Error::invalid("box init needs at least one box"));
                }
                let masks = init_mask_from_box(segmenter.as_mut(), first, &boxes)?;
                let prompts = boxes
                    .iter()
                    .enumerate()
                    .map(|(i, b)| PromptBundle::boxed(i as u32 + 1, *b))
                    .collect();
                (masks, prompts, None)
            }
            InitInput::Points(clicks) => {
                if clicks.is_empty() {
                    return Err(Error::invalid("points init needs at least one instance"));
                }
                let prompts: Vec<PromptBundle> = clicks
                    .iter()
                    .map(|c| PromptBundle::points(c.instance_id, c.points.clone()))
                    .collect();
                if prompts.iter().any(|p| p.positive_points.is_empty()) {
                    return Err(Error::invalid("every clicked instance needs at least one point"));
                }
                let masks = segment(segmenter.as_mut(), first, &prompts)?;
                (masks, prompts, Some(clicks))
            }
            InitInput::Masks(masks) => {
                if masks.hw() != (h, w) {
                    return Err(Error::invalid(format!(
                        "initial masks are {:?}, frame is {:?}",
                        masks.hw(),
                        (h, w)
                    )));
                }
                if masks.is_empty() {
                    return Err(Error::empty_region(None, "initial mask file has no instances"));
                }
                let mut masks = masks;
                masks.frame_index = first.index;
                (masks, Vec::new(), None)
            }
        };
        let segment_ms = ms_since(seg_started);
        if let Some((id, _)) = masks.iter().find(|(_, m)| m.is_empty()) {
            return Err(Error::empty_region(Some(id), "initial segmentation is empty"));
        }

        let queries: Vec<QueryPointSet> = match clicks {
            Some(clicks) => clicks
                .into_iter()
                .map(|c| QueryPointSet::new(c.instance_id, c.points, first.index))
                .collect(),
            None => sample_query_points(first, &masks, &config.strategy)?,
        };
        for q in &queries {
            if masks.get(q.instance_id).is_none() {
                return Err(Error::invalid(format!("query points for unknown instance {}", q.instance_id)));
            }
        }

        let mut instances = BTreeMap::new();
        let mut track_owner = BTreeMap::new();
        let mut track_queries = Vec::with_capacity(queries.len());
        let mut next_track_id = 1;
        for q in &queries {
            let track_id = next_track_id;
            next_track_id += 1;
            track_owner.insert(track_id, q.instance_id);
            track_queries.push(QueryPointSet::new(track_id, q.points.clone(), first.index));
            instances.insert(
                q.instance_id,
                InstanceState {
                    track_id,
                    last_mask: masks.get(q.instance_id).expect("checked above").clone(),
                    low_visible_streak: 0,
                    last_points: q.points.clone(),
                },
            );
        }
        let (session, _) = TrackerSession::init(tracker, first, track_queries, config.window_size)?;
        // instances seeded by a mask but without queries (manual strategy) are not tracked
        let masks = {
            let mut kept = InstanceMaskSet::new(first.index, h, w);
            for id in instances.keys() {
                kept.insert(*id, masks.get(*id).expect("present").clone())?;
            }
            kept
        };
        let tracked = queries
            .iter()
            .map(|q| TrackedPointSet::all_visible(q.instance_id, first.index, q.points.clone()))
            .collect::<Vec<_>>();
        let mut tracked = tracked;
        tracked.sort_by_key(|t| t.instance_id);
        let next_instance_id = instances.keys().max().copied().unwrap_or(0) + 1;
        let result = FrameResult {
            frame_index: first.index,
            masks,
            tracked,
            prompts_used,
            timings: StageTimings {
                track_ms: 0.0,
                segment_ms,
                total_ms: ms_since(started),
            },
            events: Vec::new(),
        };
        Ok((
            Self {
                config,
                tracker: Some(session),
                segmenter,
                instances,
                track_owner,
                next_track_id,
                next_instance_id,
                current: first.clone(),
                pending_events: Vec::new(),
            },
            result,
        ))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn current_frame_index(&self) -> u64 {
        self.current.index
    }

    pub fn instance_ids(&self) -> Vec<u32> {
        self.instances.keys().copied().collect()
    }

    pub fn tracker_name(&self) -> &str {
        self.tracker.as_ref().map(|t| t.name()).unwrap_or("<closed>")
    }

    pub fn segmenter_name(&self) -> &str {
        self.segmenter.name()
    }

    pub fn peak_memory_bytes(&self) -> Option<u64> {
        let t = self.tracker.as_ref().and_then(|t| t.peak_memory_bytes());
        let s = self.segmenter.peak_memory_bytes();
        match (t, s) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0) + b.unwrap_or(0)),
        }
    }

    fn tracker(&mut self) -> Result<&mut TrackerSession> {
        self.tracker
            .as_mut()
            .ok_or_else(|| Error::State("tracker session was lost after a failed restart".into()))
    }

    pub fn process_frame(&mut self, frame: &Frame) -> Result<FrameResult> {
        let index = frame.index;
        self.process_inner(frame).map_err(|e| e.at_frame(index))
    }

    fn process_inner(&mut self, frame: &Frame) -> Result<FrameResult> {
        let started = Instant::now();
        let raw = self.tracker()?.step(frame)?;
        let track_ms = ms_since(started);

        let mut tracked = Vec::with_capacity(raw.len());
        for t in raw {
            if let Some(&instance_id) = self.track_owner.get(&t.instance_id) {
                tracked.push(TrackedPointSet { instance_id, ..t });
            }
        }
        tracked.sort_by_key(|t| t.instance_id);

        let prompts: Vec<PromptBundle> = tracked
            .iter()
            .filter(|t| t.visible_count() > 0)
            .map(|t| PromptBundle::points(t.instance_id, t.visible_points().collect()))
            .collect();
        let seg_started = Instant::now();
        let segmented = if prompts.is_empty() {
            InstanceMaskSet::new(frame.index, frame.height(), frame.width())
        } else {
            segment(self.segmenter.as_mut(), frame, &prompts)?
        };
        let segment_ms = ms_since(seg_started);

        let mut masks = InstanceMaskSet::new(frame.index, frame.height(), frame.width());
        for t in &tracked {
            let m = segmented
                .get(t.instance_id)
                .cloned()
                .unwrap_or_else(|| BinaryMask::empty(frame.height(), frame.width()));
            masks.insert(t.instance_id, m)?;
        }

        let mut due = Vec::new();
        for t in &tracked {
            let st = self.instances.get_mut(&t.instance_id).expect("tracked instance has state");
            st.last_points = t.points.clone();
            let m = masks.get(t.instance_id).expect("inserted above");
            if !m.is_empty() {
                st.last_mask = m.clone();
            }
            if t.visible_count() < self.config.min_visible_points {
                st.low_visible_streak += 1;
                if st.low_visible_streak >= self.config.reinit_patience_frames {
                    due.push(t.instance_id);
                }
            } else {
                st.low_visible_streak = 0;
            }
        }
        self.current = frame.clone();
        let mut events = std::mem::take(&mut self.pending_events);
        for id in due {
            events.push(self.reinitialize(id)?);
        }
        Ok(FrameResult {
            frame_index: frame.index,
            masks,
            tracked,
            prompts_used: prompts,
            timings: StageTimings {
                track_ms,
                segment_ms,
                total_ms: ms_since(started),
            },
            events,
        })
    }

    fn resample(&self, instance_id: u32, mask: &BinaryMask) -> Result<Vec<Point>> {
        let kind = match self.config.strategy.kind {
            StrategyKind::Manual => StrategyKind::Kmedoids,
            k => k,
        };
        let seed = self.config.strategy.instance_seed(instance_id) ^ self.current.index.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        sample_instance(&self.current, mask, kind, self.config.strategy.points_per_instance, seed)
            .map_err(|e| match e {
                Error::EmptyRegion { message, .. } => Error::empty_region(Some(instance_id), message),
                e => e,
            })
    }

    /// Replace an instance's track with fresh points sampled on its last
    /// non-empty mask, born at the current frame.
    fn reinitialize(&mut self, instance_id: u32) -> Result<PipelineEvent> {
        let mask = self.instances[&instance_id].last_mask.clone();
        let points = self.resample(instance_id, &mask)?;
        let n = points.len();
        let restarted = self.replace_track(instance_id, points)?;
        let st = self.instances.get_mut(&instance_id).expect("present");
        st.low_visible_streak = 0;
        Ok(PipelineEvent::Reinitialized {
            instance_id,
            points: n,
            session_restarted: restarted,
        })
    }

    /// Point `instance_id` at a new track with `points` (inserting the
    /// instance if new). Returns whether the tracker session was restarted.
    fn replace_track(&mut self, instance_id: u32, points: Vec<Point>) -> Result<bool> {
        let track_id = self.next_track_id;
        self.next_track_id += 1;
        let old = self.instances.get(&instance_id).map(|s| s.track_id).filter(|&t| t != 0);
        let at = self.current.clone();
        let supports = self.tracker()?.capabilities().supports_midstream_queries;
        if supports {
            let session = self.tracker()?;
            session.add_queries(vec![QueryPointSet::new(track_id, points.clone(), at.index)], &at)?;
            if let Some(old) = old {
                session.drop_instances(&[old])?;
            }
        } else {
            let (h, w) = at.hw();
            let mut queries = Vec::with_capacity(self.instances.len() + 1);
            for (&id, st) in &self.instances {
                if id != instance_id {
                    let pts = st.last_points.iter().map(|p| clamp_into(*p, h, w)).collect();
                    queries.push(QueryPointSet::new(st.track_id, pts, at.index));
                }
            }
            queries.push(QueryPointSet::new(track_id, points.clone(), at.index));
            let adapter = self.tracker.take().expect("checked above").into_adapter();
            let (session, _) = TrackerSession::init(adapter, &at, queries, self.config.window_size)?;
            self.tracker = Some(session);
        }
        if let Some(old) = old {
            self.track_owner.remove(&old);
        }
        self.track_owner.insert(track_id, instance_id);
        match self.instances.get_mut(&instance_id) {
            Some(st) => {
                st.track_id = track_id;
                st.last_points = points;
            }
            None => unreachable!("callers insert state first"),
        }
        Ok(!supports)
    }

    /// Segment `prompt` on the current frame and start tracking the result
    /// as a new instance. Returns the new instance id; the instance appears
    /// from the next processed frame on. On error the session is unchanged.
    pub fn add_instance(&mut self, prompt: PromptBundle) -> Result<u32> {
        let id = self.next_instance_id;
        let bundle = PromptBundle {
            instance_id: id,
            ..prompt
        };
        let masks = segment(self.segmenter.as_mut(), &self.current, std::slice::from_ref(&bundle))?;
        let mask = masks.get(id).cloned().unwrap_or_else(|| BinaryMask::empty(self.current.height(), self.current.width()));
        if mask.is_empty() {
            return Err(Error::empty_region(None, "prompt produced an empty mask; no instance added"));
        }
        let points = if self.config.strategy.kind == StrategyKind::Manual && !bundle.positive_points.is_empty() {
            bundle.positive_points.clone()
        } else {
            self.resample(id, &mask)?
        };
        self.instances.insert(
            id,
            InstanceState {
                track_id: 0,
                last_mask: mask,
                low_visible_streak: 0,
                last_points: points.clone(),
            },
        );
        if let Err(e) = self.replace_track(id, points) {
            self.instances.remove(&id);
            return Err(e);
        }
        self.next_instance_id += 1;
        self.pending_events.push(PipelineEvent::InstanceAdded {
            instance_id: id,
            at_frame: self.current.index,
        });
        Ok(id)
    }
}

/// Per-stage latency and frame counts of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: u64,
    pub dropped_frames: u64,
    pub track_ms: Option<LatencyStats>,
    pub segment_ms: Option<LatencyStats>,
    pub total_ms: Option<LatencyStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct RunFailure {
    pub summary: RunSummary,
    pub error: Error,
}

#[derive(Default)]
struct Collector {
    frames: u64,
    track: Vec<f64>,
    segment: Vec<f64>,
    total: Vec<f64>,
}

impl Collector {
    fn push(&mut self, r: &FrameResult) {
        self.frames += 1;
        self.track.push(r.timings.track_ms);
        self.segment.push(r.timings.segment_ms);
        self.total.push(r.timings.total_ms);
    }

    fn summary(&self, dropped: u64, error: Option<&Error>) -> RunSummary {
        RunSummary {
            frames: self.frames,
            dropped_frames: dropped,
            track_ms: LatencyStats::from_samples(&self.track),
            segment_ms: LatencyStats::from_samples(&self.segment),
            total_ms: LatencyStats::from_samples(&self.total),
            error: error.map(|e| e.to_string()),
        }
    }
}

/// Everything needed to run a pipeline over one video.
pub struct RunSpec {
    pub tracker: Box<dyn TrackerAdapter>,
    pub segmenter: Box<dyn SegmenterAdapter>,
    pub init: InitInput,
    pub config: PipelineConfig,
}

/// Stream every frame of `video` through a fresh session, handing results
/// to `sink` in frame order. The first error stops the run.
pub fn run(
    video: &mut dyn VideoSource,
    spec: RunSpec,
    sink: &mut dyn FnMut(&FrameResult) -> Result<()>,
) -> std::result::Result<RunSummary, Box<RunFailure>> {
    let mut acc = Collector::default();
    let fail = |acc: &Collector, dropped: u64, error: Error| {
        Box::new(RunFailure {
            summary: acc.summary(dropped, Some(&error)),
            error,
        })
    };
    let (mut session, first) = match PipelineSession::initialize(video, spec.tracker, spec.segmenter, spec.init, spec.config)
    {
        Ok(v) => v,
        Err(e) => return Err(fail(&acc, video.dropped(), e)),
    };
    acc.push(&first);
    if let Err(e) = sink(&first) {
        return Err(fail(&acc, video.dropped(), e));
    }
    loop {
        let frame = match video.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break,
            Err(e) => return Err(fail(&acc, video.dropped(), e)),
        };
        let result = match session.process_frame(&frame) {
            Ok(r) => r,
            Err(e) => return Err(fail(&acc, video.dropped(), e)),
        };
        acc.push(&result);
        if let Err(e) = sink(&result) {
            return Err(fail(&acc, video.dropped(), e.at_frame(frame.index)));
        }
    }
    Ok(acc.summary(video.dropped(), None))
}

/// Where a mask-file init reads from, plus the other init inputs a config
/// can carry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSources {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub boxes: Vec<BoxPrompt>,
    #[serde(default)]
    pub points: Vec<ManualPoints>,
    #[serde(default)]
    pub mask_file: Option<PathBuf>,
}

impl InitSources {
    /// Resolve the input for `mode`. Mask files are decoded by `load_mask`.
    pub fn resolve(
        &self,
        mode: InitMode,
        load_mask: impl FnOnce(&std::path::Path) -> Result<InstanceMaskSet>,
    ) -> Result<InitInput> {
        Ok(match mode {
            InitMode::Text => InitInput::Text(self.text.clone().unwrap_or_else(|| DEFAULT_TEXT_PROMPT.into())),
            InitMode::Box => {
                if self.boxes.is_empty() {
                    return Err(Error::config("pipeline.init.boxes", "init_mode = \"box\" needs at least one box"));
                }
                InitInput::Boxes(self.boxes.clone())
            }
            InitMode::Points => {
                if self.points.is_empty() {
                    return Err(Error::config("pipeline.init.points", "init_mode = \"points\" needs clicks"));
                }
                InitInput::Points(self.points.clone())
            }
            InitMode::MaskFile => {
                let path = self
                    .mask_file
                    .as_deref()
                    .ok_or_else(|| Error::config("pipeline.init.mask_file", "init_mode = \"mask_file\" needs a path"))?;
                InitInput::Masks(load_mask(path)?)
            }
        })
    }
}
