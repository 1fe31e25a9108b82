//! One TOML document describing a whole experiment: sampling, tracker,
//! segmenter, pipeline, training, benchmarking, evaluation and service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalbench::{BenchConfig, DatasetLayout, GtKind};
use crate::finetune::TrainConfig;
use crate::maskio::MaskEncoding;
use crate::pipeline::{InitMode, InitSources, PipelineConfig, RunMode};
use crate::registry::{SegmenterSpec, TrackerSpec};
use crate::sampling::SamplingStrategy;
use crate::trackers::DEFAULT_WINDOW;
use crate::video::DEFAULT_FPS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub init_mode: InitMode,
    pub min_visible_points: usize,
    pub reinit_patience_frames: usize,
    pub window_size: usize,
    pub text_threshold: f32,
    pub run_mode: RunMode,
    /// Frame rate assumed for image directories.
    pub fps: f64,
    /// Command that decodes container video files (see `video`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decode_helper: Option<Vec<String>>,
    /// Write a paletted PNG of every frame's masks.
    pub overlays: bool,
    /// How an init mask file encodes instances.
    pub mask_encoding: MaskEncoding,
    pub init: InitSources,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        PipelineSection {
            init_mode: InitMode::Text,
            min_visible_points: p.min_visible_points,
            reinit_patience_frames: p.reinit_patience_frames,
            window_size: DEFAULT_WINDOW,
            text_threshold: p.text_threshold,
            run_mode: RunMode::Offline,
            fps: DEFAULT_FPS,
            decode_helper: None,
            overlays: false,
            mask_encoding: MaskEncoding::Paletted,
            init: InitSources::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub method: String,
    pub dataset: String,
    #[serde(flatten)]
    pub latency: BenchConfig,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            method: "tapseg".into(),
            dataset: "unnamed".into(),
            latency: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub gt_kind: GtKind,
    pub layout: DatasetLayout,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            gt_kind: GtKind::Instance,
            layout: DatasetLayout {
                frames_dir: "frames".into(),
                masks_dir: "masks".into(),
                mask_encoding: MaskEncoding::Paletted,
            },
        }
    }
}

/// Environment variable that overrides `service.bind`.
pub const BIND_ENV: &str = "TAPSEG_BIND";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    /// Per-session result directories are created here.
    pub results_dir: PathBuf,
    /// Server-side video paths must resolve inside this directory when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub media_root: Option<PathBuf>,
    /// Events kept per session for reconnecting clients.
    pub event_buffer: usize,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            bind: "127.0.0.1:8080".into(),
            results_dir: "tapseg-sessions".into(),
            media_root: None,
            event_buffer: 100_000,
        }
    }
}

impl ServiceSection {
    /// `bind`, unless the environment overrides it.
    pub fn bind_addr(&self) -> String {
        std::env::var(BIND_ENV).ok().filter(|v| !v.is_empty()).unwrap_or_else(|| self.bind.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sampling: SamplingStrategy,
    pub tracker: TrackerSpec,
    pub segmenter: SegmenterSpec,
    pub pipeline: PipelineSection,
    pub train: TrainConfig,
    pub bench: BenchSection,
    pub eval: EvalSection,
    pub service: ServiceSection,
}

impl ExperimentConfig {
    /// Parse TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| locate(text, s.start)).unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Set every seed in the document.
    pub fn set_seed(&mut self, seed: u64) {
        self.sampling.seed = seed;
        self.train.seed = seed;
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            strategy: self.sampling.clone(),
            tracker: self.tracker.clone(),
            segmenter: self.segmenter.clone(),
            init_mode: self.pipeline.init_mode,
            min_visible_points: self.pipeline.min_visible_points,
            reinit_patience_frames: self.pipeline.reinit_patience_frames,
            window_size: self.pipeline.window_size,
            text_threshold: self.pipeline.text_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline_config().validate()?;
        self.train.validate()?;
        if !(self.pipeline.fps > 0.0 && self.pipeline.fps.is_finite()) {
            return Err(Error::config("pipeline.fps", "must be positive"));
        }
        if matches!(&self.pipeline.decode_helper, Some(cmd) if cmd.is_empty()) {
            return Err(Error::config("pipeline.decode_helper", "must name a command"));
        }
        if self.service.event_buffer == 0 {
            return Err(Error::config("service.event_buffer", "must be positive"));
        }
        Ok(())
    }
}

/// Dotted key path of the table or key containing byte offset `at`.
fn locate(text: &str, at: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        if t.starts_with('[') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        offset += line.len();
        if offset > at {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, true) => "config".into(),
        (true, false) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::StrategyKind;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn sections_parse() {
        let c = ExperimentConfig::from_toml(
            r#"
[sampling]
strategy = "grid"
points_per_instance = 3

[tracker]
name = "oracle"

[segmenter]
name = "fixed_cost"
cost_ms = 5.0

[pipeline]
init_mode = "box"
fps = 30.0
decode_helper = ["ffmpeg-rgb"]

[pipeline.init]
boxes = [[1.0, 2.0, 30.0, 40.0]]

[train]
epochs = 2

[bench]
device = "RTX 4060"
warmup_frames = 5

[service]
bind = "0.0.0.0:9000"
"#,
        )
        .unwrap();
        assert_eq!(c.sampling.kind, StrategyKind::Grid);
        assert_eq!(c.pipeline.init.boxes.len(), 1);
        assert_eq!(c.bench.latency.device, "RTX 4060");
        assert_eq!(c.bench.latency.measured_frames, 200);
        assert_eq!(c.train.batch_size, 32);
        let p = c.pipeline_config();
        assert_eq!(p.init_mode, InitMode::Box);
        assert_eq!(p.strategy.points_per_instance, 3);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_toml("[tracker]\nnmae = \"ncc\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field.starts_with("tracker")), "{err}");
        let err = ExperimentConfig::from_toml("[train.freeze]\nprompt_encoder = true\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field.starts_with("train")), "{err}");
        let mut c = ExperimentConfig::default();
        c.sampling.points_per_instance = 12;
        assert!(matches!(c.validate(), Err(Error::Config { ref field, .. }) if field == "sampling.points_per_instance"));
    }

    #[test]
    fn seed_reaches_every_section() {
        let mut c = ExperimentConfig::default();
        c.set_seed(42);
        assert_eq!(c.sampling.seed, 42);
        assert_eq!(c.train.seed, 42);
    }
}
