//! Session state machine and the per-session pipeline worker.

use std::collections::VecDeque;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crossbeam_channel::{bounded, never, select, unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};
use tapseg_core::config::ExperimentConfig;
use tapseg_core::maskio::load_mask_png;
use tapseg_core::pipeline::{FrameResult, InitInput, InitMode, PipelineConfig, PipelineSession, RunMode};
use tapseg_core::sampling::ManualPoints;
use tapseg_core::synthetic::Scene;
use tapseg_core::trackers::MotionField;
use tapseg_core::video::{open_video, LiveFeed, SyntheticSource, VideoSource};
use tapseg_core::{Error, Frame, PromptBundle, Result};
use tokio::sync::oneshot;

use crate::events::{EventBody, EventLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitingPrompt,
    Running,
    Paused,
    Finished,
    Failed,
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, SessionState::Finished | SessionState::Failed)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SessionState::AwaitingPrompt => "awaiting_prompt",
            SessionState::Running => "running",
            SessionState::Paused => "paused",
            SessionState::Finished => "finished",
            SessionState::Failed => "failed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlVerb {
    Pause,
    Resume,
    Stop,
}

/// State after applying `verb`, or a state error for an illegal transition.
pub fn transition(state: SessionState, verb: ControlVerb) -> Result<SessionState> {
    use SessionState::*;
    match (state, verb) {
        (Running, ControlVerb::Pause) => Ok(Paused),
        (Paused, ControlVerb::Resume) => Ok(Running),
        (Running | Paused, ControlVerb::Stop) => Ok(Finished),
        (s, v) => Err(Error::State(format!("cannot {v:?} a session that is {s}").to_lowercase())),
    }
}

/// Where a session's frames come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceSpec {
    /// Server-side image directory, scene file, or container video.
    Path { path: PathBuf },
    /// Inline synthetic scene.
    Synthetic { scene: Scene },
    /// Frames uploaded as PNG bodies. Live sessions (`pipeline.run_mode =
    /// "live"`) keep only the newest pending frame.
    Push,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub config: ExperimentConfig,
    pub source: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptAck {
    pub instance_ids: Vec<u32>,
    /// Frame the prompts were applied to.
    pub frame_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub state: SessionState,
    /// Index of the last processed frame.
    pub frame_cursor: Option<u64>,
    pub instance_ids: Vec<u32>,
    pub dropped_count: u64,
    /// Events emitted so far.
    pub events: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub results_dir: PathBuf,
}

enum Command {
    Prompt(Vec<PromptBundle>, oneshot::Sender<Result<PromptAck>>),
    Control(ControlVerb, oneshot::Sender<Result<SessionState>>),
    Shutdown,
}

#[derive(Debug, Clone)]
struct Status {
    state: SessionState,
    frame_cursor: Option<u64>,
    instance_ids: Vec<u32>,
    error: Option<String>,
}

enum PushSink {
    Queue(Mutex<Option<Sender<Frame>>>),
    Live(LiveFeed),
}

/// Frames pushed by clients in offline mode: nothing is dropped.
struct QueueSource(Receiver<Frame>);

impl VideoSource for QueueSource {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        Ok(self.0.recv().ok())
    }
}

/// Recent frames kept for clients that render overlays.
const FRAME_CACHE: usize = 256;

pub struct SessionHandle {
    pub id: String,
    pub log: Arc<EventLog>,
    pub results_dir: PathBuf,
    commands: Sender<Command>,
    status: Arc<Mutex<Status>>,
    push: Option<PushSink>,
    pushed: AtomicU64,
    fps: f64,
    recent: Arc<Mutex<VecDeque<Frame>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

fn media_path(path: &Path, media_root: Option<&Path>) -> Result<PathBuf> {
    let Some(root) = media_root else {
        return Ok(path.to_path_buf());
    };
    let full = root.join(path);
    let canon = full
        .canonicalize()
        .map_err(|_| Error::invalid(format!("video {} does not exist", path.display())))?;
    let root = root.canonicalize().map_err(|e| Error::io(root, e))?;
    if !canon.starts_with(&root) {
        return Err(Error::invalid(format!("video {} is outside the media root", path.display())));
    }
    Ok(canon)
}

impl SessionHandle {
    /// Validate the request, open the source and start the worker thread.
    pub fn start(
        id: String,
        req: CreateSession,
        results_root: &Path,
        media_root: Option<&Path>,
        event_buffer: usize,
    ) -> Result<Arc<SessionHandle>> {
        let config = req.config;
        config.validate()?;
        let pipeline = config.pipeline_config();
        let fps = config.pipeline.fps;
        let (source, motion, push): (Box<dyn VideoSource>, Option<Arc<dyn MotionField>>, Option<PushSink>) =
            match req.source {
                SourceSpec::Path { path } => {
                    let path = media_path(&path, media_root)?;
                    let opened = open_video(&path, fps, config.pipeline.decode_helper.as_deref())?;
                    (opened.source, opened.motion, None)
                }
                SourceSpec::Synthetic { scene } => {
                    scene.validate()?;
                    let motion: Arc<dyn MotionField> = Arc::new(scene.clone());
                    (Box::new(SyntheticSource::new(scene)), Some(motion), None)
                }
                SourceSpec::Push => match config.pipeline.run_mode {
                    RunMode::Live => {
                        let feed = LiveFeed::new();
                        (Box::new(feed.clone()), None, Some(PushSink::Live(feed)))
                    }
                    RunMode::Offline => {
                        let (tx, rx) = unbounded();
                        (Box::new(QueueSource(rx)), None, Some(PushSink::Queue(Mutex::new(Some(tx)))))
                    }
                },
            };
        // adapters are built per attempt; check names and wiring up front
        pipeline.segmenter.validate()?;
        pipeline.tracker.build(motion.clone())?;

        let auto_init = match config.pipeline.init_mode {
            InitMode::Text | InitMode::MaskFile => true,
            InitMode::Points => !config.pipeline.init.points.is_empty(),
            InitMode::Box => !config.pipeline.init.boxes.is_empty(),
        };
        let auto_input = if auto_init {
            let enc = config.pipeline.mask_encoding;
            Some(config.pipeline.init.resolve(config.pipeline.init_mode, |p| load_mask_png(p, enc, 0))?)
        } else {
            None
        };

        let results_dir = results_root.join(&id);
        fs::create_dir_all(&results_dir).map_err(|e| Error::io(&results_dir, e))?;
        let masks_path = results_dir.join("masks.jsonl");
        let masks = BufWriter::new(File::create(&masks_path).map_err(|e| Error::io(&masks_path, e))?);
        fs::write(
            results_dir.join("config.toml"),
            config.to_toml(),
        )
        .map_err(|e| Error::io(&results_dir, e))?;

        let log = Arc::new(EventLog::new(id.clone(), event_buffer));
        let initial = if auto_init {
            SessionState::Running
        } else {
            SessionState::AwaitingPrompt
        };
        let status = Arc::new(Mutex::new(Status {
            state: initial,
            frame_cursor: None,
            instance_ids: Vec::new(),
            error: None,
        }));
        log.push(EventBody::State { state: initial });

        let (frame_tx, frame_rx) = bounded::<Result<Frame>>(1);
        std::thread::Builder::new()
            .name(format!("reader-{id}"))
            .spawn(move || read_frames(source, frame_tx))
            .map_err(|e| Error::io("reader thread", e))?;

        let (cmd_tx, cmd_rx) = unbounded();
        let recent = Arc::new(Mutex::new(VecDeque::new()));
        let dropped: Box<dyn Fn() -> u64 + Send> = match &push {
            Some(PushSink::Live(feed)) => {
                let feed = feed.clone();
                Box::new(move || feed.dropped_count())
            }
            _ => Box::new(|| 0),
        };
        let worker = Worker {
            config: pipeline,
            motion,
            auto_input,
            commands: cmd_rx,
            frames: frame_rx,
            log: log.clone(),
            status: status.clone(),
            recent: recent.clone(),
            masks,
            dropped,
            first: None,
            session: None,
        };
        let thread = std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || worker.run())
            .map_err(|e| Error::io("session thread", e))?;

        Ok(Arc::new(SessionHandle {
            id,
            log,
            results_dir,
            commands: cmd_tx,
            status,
            push,
            pushed: AtomicU64::new(0),
            fps,
            recent,
            worker: Mutex::new(Some(thread)),
        }))
    }

    pub fn info(&self) -> SessionInfo {
        let st = self.status.lock().expect("status lock").clone();
        SessionInfo {
            session_id: self.id.clone(),
            state: st.state,
            frame_cursor: st.frame_cursor,
            instance_ids: st.instance_ids,
            dropped_count: match &self.push {
                Some(PushSink::Live(feed)) => feed.dropped_count(),
                _ => 0,
            },
            events: self.log.len(),
            error: st.error,
            results_dir: self.results_dir.clone(),
        }
    }

    pub fn state(&self) -> SessionState {
        self.status.lock().expect("status lock").state
    }

    fn gone(&self) -> Error {
        Error::State(format!("session is {}", self.state()))
    }

    /// Queue prompts; they apply at the next frame boundary.
    pub async fn prompt(&self, prompts: Vec<PromptBundle>) -> Result<PromptAck> {
        if prompts.is_empty() {
            return Err(Error::invalid("no prompts given"));
        }
        let (tx, rx) = oneshot::channel();
        self.commands.send(Command::Prompt(prompts, tx)).map_err(|_| self.gone())?;
        rx.await.map_err(|_| self.gone())?
    }

    pub async fn control(&self, verb: ControlVerb) -> Result<SessionState> {
        // refuse obviously illegal verbs without waiting for the worker
        transition(self.state(), verb)?;
        let (tx, rx) = oneshot::channel();
        self.commands.send(Command::Control(verb, tx)).map_err(|_| self.gone())?;
        rx.await.map_err(|_| self.gone())?
    }

    /// Accept one uploaded frame. Returns the index assigned to it.
    pub fn push_frame(&self, png: &[u8]) -> Result<u64> {
        let sink = self
            .push
            .as_ref()
            .ok_or_else(|| Error::invalid("this session reads its frames from a file"))?;
        let img = image::load_from_memory(png)?.to_rgb8();
        let index = self.pushed.fetch_add(1, Ordering::SeqCst);
        let frame = Frame::from_rgb_image(index, index as f64 * 1000.0 / self.fps, &img)?;
        match sink {
            PushSink::Live(feed) => feed.push(frame),
            PushSink::Queue(tx) => {
                let guard = tx.lock().expect("push lock");
                let tx = guard.as_ref().ok_or_else(|| Error::State("frame upload already ended".into()))?;
                tx.send(frame).map_err(|_| self.gone())?;
            }
        }
        Ok(index)
    }

    /// Mark the end of uploaded frames.
    pub fn end_frames(&self) -> Result<()> {
        match &self.push {
            Some(PushSink::Live(feed)) => feed.close(),
            Some(PushSink::Queue(tx)) => {
                tx.lock().expect("push lock").take();
            }
            None => return Err(Error::invalid("this session reads its frames from a file")),
        }
        Ok(())
    }

    pub fn recent_frame(&self, index: u64) -> Option<Frame> {
        self.recent
            .lock()
            .expect("frame cache lock")
            .iter()
            .find(|f| f.index == index)
            .cloned()
    }

    /// Stop the worker after its current frame and wait for it.
    pub fn shutdown(&self) {
        let _ = self.commands.send(Command::Shutdown);
        let _ = self.end_frames();
        if let Some(t) = self.worker.lock().expect("worker lock").take() {
            let _ = t.join();
        }
    }
}

fn read_frames(mut source: Box<dyn VideoSource>, tx: Sender<Result<Frame>>) {
    loop {
        match source.next_frame() {
            Ok(Some(f)) => {
                if tx.send(Ok(f)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e.root() {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::EmptyRegion { .. } => "empty_region",
        Error::Ordering { .. } => "ordering",
        Error::TrackerBackend { .. } => "tracker_backend",
        Error::SegmenterBackend { .. } => "segmenter_backend",
        Error::Capability(_) => "capability",
        Error::Config { .. } => "config",
        Error::State(_) => "state",
        _ => "internal",
    }
}

/// Initialisation input for prompts submitted while awaiting a prompt.
fn init_from_prompts(prompts: &[PromptBundle]) -> Result<InitInput> {
    let all = |f: fn(&PromptBundle) -> bool| prompts.iter().all(f);
    if all(|p| !p.positive_points.is_empty() && p.bbox.is_none() && p.text.is_none()) {
        return Ok(InitInput::Points(
            prompts
                .iter()
                .enumerate()
                .map(|(n, p)| ManualPoints {
                    instance_id: if p.instance_id == 0 { n as u32 + 1 } else { p.instance_id },
                    points: p.positive_points.clone(),
                })
                .collect(),
        ));
    }
    if all(|p| p.bbox.is_some() && p.positive_points.is_empty() && p.text.is_none()) {
        return Ok(InitInput::Boxes(prompts.iter().filter_map(|p| p.bbox).collect()));
    }
    if prompts.len() == 1 && prompts[0].positive_points.is_empty() && prompts[0].bbox.is_none() {
        if let Some(t) = &prompts[0].text {
            return Ok(InitInput::Text(t.clone()));
        }
    }
    Err(Error::invalid(
        "initial prompts must be all clicks, all boxes, or a single text prompt",
    ))
}

struct Worker {
    config: PipelineConfig,
    motion: Option<Arc<dyn MotionField>>,
    auto_input: Option<InitInput>,
    commands: Receiver<Command>,
    frames: Receiver<Result<Frame>>,
    log: Arc<EventLog>,
    status: Arc<Mutex<Status>>,
    recent: Arc<Mutex<VecDeque<Frame>>>,
    masks: BufWriter<File>,
    dropped: Box<dyn Fn() -> u64 + Send>,
    first: Option<Frame>,
    session: Option<PipelineSession>,
}

enum Flow {
    Continue,
    Exit,
}

impl Worker {
    fn state(&self) -> SessionState {
        self.status.lock().expect("status lock").state
    }

    fn set_state(&self, state: SessionState) {
        let mut st = self.status.lock().expect("status lock");
        if st.state == state {
            return;
        }
        st.state = state;
        drop(st);
        self.log.push(EventBody::State { state });
    }

    fn fail(&mut self, frame_index: Option<u64>, error: Error) {
        tracing::warn!(%error, "session failed");
        self.log.push(EventBody::Error {
            frame_index,
            kind: error_kind(&error).into(),
            message: error.to_string(),
        });
        self.status.lock().expect("status lock").error = Some(error.to_string());
        self.set_state(SessionState::Failed);
    }

    fn run(mut self) {
        loop {
            let flow = match self.state() {
                SessionState::AwaitingPrompt => self.step_awaiting(),
                SessionState::Running => self.step_running(),
                SessionState::Paused => self.step_paused(),
                SessionState::Finished | SessionState::Failed => Flow::Exit,
            };
            if let Flow::Exit = flow {
                break;
            }
        }
        let _ = self.masks.flush();
        self.log.close();
    }

    /// Wait for the first frame and, unless auto-initializing, the initial prompts.
    fn step_awaiting(&mut self) -> Flow {
        let waiting_frame = if self.first.is_none() {
            self.frames.clone()
        } else {
            never()
        };
        select! {
            recv(self.commands) -> cmd => match cmd {
                Ok(cmd) => self.command(cmd),
                Err(_) => Flow::Exit,
            },
            recv(waiting_frame) -> f => match f {
                Ok(Ok(f)) => {
                    self.remember(&f);
                    self.first = Some(f);
                    Flow::Continue
                }
                Ok(Err(e)) => {
                    self.fail(None, e);
                    Flow::Exit
                }
                Err(_) => {
                    self.fail(None, Error::invalid("video has no frames"));
                    Flow::Exit
                }
            },
        }
    }

    fn step_running(&mut self) -> Flow {
        // pending commands go first so they land on this frame boundary
        while let Ok(cmd) = self.commands.try_recv() {
            if let Flow::Exit = self.command(cmd) {
                return Flow::Exit;
            }
            if self.state() != SessionState::Running {
                return Flow::Continue;
            }
        }
        if self.session.is_none() {
            if self.first.is_none() {
                // stay responsive to commands until the first frame arrives
                return self.step_awaiting();
            }
            return self.auto_initialize();
        }
        select! {
            recv(self.commands) -> cmd => match cmd {
                Ok(cmd) => self.command(cmd),
                Err(_) => Flow::Exit,
            },
            recv(self.frames) -> f => match f {
                Ok(Ok(frame)) => self.process(frame),
                Ok(Err(e)) => {
                    self.fail(None, e);
                    Flow::Exit
                }
                Err(_) => {
                    self.set_state(SessionState::Finished);
                    Flow::Exit
                }
            },
        }
    }

    fn step_paused(&mut self) -> Flow {
        match self.commands.recv() {
            Ok(cmd) => self.command(cmd),
            Err(_) => Flow::Exit,
        }
    }

    fn auto_initialize(&mut self) -> Flow {
        let first = self.first.take().expect("first frame has arrived");
        let input = self.auto_input.take().expect("auto init has an input");
        let index = first.index;
        match self.initialize(&first, input) {
            Ok(()) => Flow::Continue,
            Err(e) => {
                self.fail(Some(index), e);
                Flow::Exit
            }
        }
    }

    fn initialize(&mut self, first: &Frame, input: InitInput) -> Result<()> {
        let mut config = self.config.clone();
        config.init_mode = input.mode();
        let tracker = config.tracker.build(self.motion.clone())?;
        let segmenter = config.segmenter.build()?;
        let (session, result) = PipelineSession::initialize_on(first, tracker, segmenter, input, config)?;
        self.session = Some(session);
        self.emit(&result);
        Ok(())
    }

    fn process(&mut self, frame: Frame) -> Flow {
        self.remember(&frame);
        let index = frame.index;
        let session = self.session.as_mut().expect("running sessions are initialized");
        match session.process_frame(&frame) {
            Ok(result) => {
                self.emit(&result);
                Flow::Continue
            }
            Err(e) => {
                self.fail(Some(index), e);
                Flow::Exit
            }
        }
    }

    fn remember(&self, frame: &Frame) {
        let mut recent = self.recent.lock().expect("frame cache lock");
        if recent.len() == FRAME_CACHE {
            recent.pop_front();
        }
        recent.push_back(frame.clone());
    }

    fn emit(&mut self, result: &FrameResult) {
        let record = result.to_record(true);
        let mut plain = result.to_record(false);
        plain.events.clear();
        if let Ok(line) = serde_json::to_string(&plain) {
            let _ = writeln!(self.masks, "{line}");
        }
        {
            let mut st = self.status.lock().expect("status lock");
            st.frame_cursor = Some(result.frame_index);
            if let Some(s) = &self.session {
                st.instance_ids = s.instance_ids();
            }
        }
        self.log.push(EventBody::Frame {
            record,
            dropped_count: (self.dropped)(),
        });
    }

    fn command(&mut self, cmd: Command) -> Flow {
        match cmd {
            Command::Shutdown => {
                if !self.state().is_terminal() {
                    self.set_state(SessionState::Finished);
                }
                Flow::Exit
            }
            Command::Control(verb, reply) => {
                let next = transition(self.state(), verb);
                if let Ok(s) = next {
                    self.set_state(s);
                }
                let _ = reply.send(next);
                if self.state().is_terminal() {
                    Flow::Exit
                } else {
                    Flow::Continue
                }
            }
            Command::Prompt(prompts, reply) => {
                let ack = self.apply_prompts(prompts);
                let _ = reply.send(ack);
                Flow::Continue
            }
        }
    }

    fn apply_prompts(&mut self, prompts: Vec<PromptBundle>) -> Result<PromptAck> {
        match self.state() {
            SessionState::AwaitingPrompt => {
                let first = self
                    .first
                    .clone()
                    .ok_or_else(|| Error::State("no frame has arrived yet".into()))?;
                let input = init_from_prompts(&prompts)?;
                self.initialize(&first, input)?;
                self.first = None;
                self.set_state(SessionState::Running);
                let ids = self.session.as_ref().map(|s| s.instance_ids()).unwrap_or_default();
                Ok(PromptAck {
                    instance_ids: ids,
                    frame_index: first.index,
                })
            }
            SessionState::Running => {
                let session = self
                    .session
                    .as_mut()
                    .ok_or_else(|| Error::State("session is still initializing".into()))?;
                let mut ids = Vec::new();
                for p in prompts {
                    ids.push(session.add_instance(p)?);
                }
                let ack = PromptAck {
                    instance_ids: ids,
                    frame_index: session.current_frame_index(),
                };
                self.status.lock().expect("status lock").instance_ids = session.instance_ids();
                Ok(ack)
            }
            s => Err(Error::State(format!("cannot prompt a session that is {s}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tapseg_core::geometry::{BoxPrompt, Point};

    #[test]
    fn legal_transitions() {
        use SessionState::*;
        assert_eq!(transition(Running, ControlVerb::Pause).unwrap(), Paused);
        assert_eq!(transition(Paused, ControlVerb::Resume).unwrap(), Running);
        assert_eq!(transition(Paused, ControlVerb::Stop).unwrap(), Finished);
        for (s, v) in [
            (Finished, ControlVerb::Stop),
            (Running, ControlVerb::Resume),
            (AwaitingPrompt, ControlVerb::Pause),
            (Failed, ControlVerb::Resume),
        ] {
            assert!(matches!(transition(s, v), Err(Error::State(_))));
        }
    }

    #[test]
    fn initial_prompt_kinds() {
        let clicks = [PromptBundle::points(0, vec![Point::new(1.0, 1.0)]), PromptBundle::points(0, vec![Point::new(5.0, 5.0)])];
        match init_from_prompts(&clicks).unwrap() {
            InitInput::Points(p) => assert_eq!(p.iter().map(|m| m.instance_id).collect::<Vec<_>>(), vec![1, 2]),
            other => panic!("{other:?}"),
        }
        let b = PromptBundle::boxed(0, BoxPrompt::new(0.0, 0.0, 4.0, 4.0).unwrap());
        assert!(matches!(init_from_prompts(&[b.clone()]).unwrap(), InitInput::Boxes(_)));
        assert!(init_from_prompts(&[b, clicks[0].clone()]).is_err());
        assert!(matches!(
            init_from_prompts(&[PromptBundle::text(0, "tool")]).unwrap(),
            InitInput::Text(_)
        ));
    }

    #[test]
    fn state_names_match_the_wire() {
        assert_eq!(serde_json::to_string(&SessionState::AwaitingPrompt).unwrap(), "\"awaiting_prompt\"");
        assert_eq!(SessionState::AwaitingPrompt.to_string(), "awaiting_prompt");
    }
}
