//! Build adapters by name from configuration.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmenters::{FixedCostSegmenter, PromptModes, SegmenterAdapter, SocketSegmenter, ThresholdSegmenter};
use crate::trackers::{
    MotionField, NccConfig, NccTracker, OracleTracker, SocketTracker, StaticTracker, TrackerAdapter, TrackerCapabilities,
};

pub const TRACKER_NAMES: &[&str] = &["oracle", "ncc", "static", "remote"];
pub const SEGMENTER_NAMES: &[&str] = &["threshold", "fixed_cost", "remote"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSpec {
    #[serde(default = "default_tracker")]
    pub name: String,
    #[serde(default)]
    pub ncc: NccConfig,
    /// Per-step cost of the `static` tracker.
    #[serde(default)]
    pub cost_ms: f64,
    /// `host:port` of a `remote` tracker.
    #[serde(default)]
    pub addr: Option<String>,
    /// Declared capabilities of `static` and `remote` trackers.
    #[serde(default = "yes")]
    pub supports_midstream_queries: bool,
    #[serde(default = "yes")]
    pub supports_visibility: bool,
}

fn default_tracker() -> String {
    "ncc".into()
}

fn yes() -> bool {
    true
}

impl Default for TrackerSpec {
    fn default() -> Self {
        Self {
            name: default_tracker(),
            ncc: NccConfig::default(),
            cost_ms: 0.0,
            addr: None,
            supports_midstream_queries: true,
            supports_visibility: true,
        }
    }
}

impl TrackerSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !TRACKER_NAMES.contains(&self.name.as_str()) {
            return Err(Error::config(
                "tracker.name",
                format!("unknown tracker `{}` (known: {})", self.name, TRACKER_NAMES.join(", ")),
            ));
        }
        if !(self.cost_ms >= 0.0 && self.cost_ms.is_finite()) {
            return Err(Error::config("tracker.cost_ms", "must be a non-negative number"));
        }
        if self.name == "remote" && self.addr.is_none() {
            return Err(Error::config("tracker.addr", "remote tracker needs an address"));
        }
        Ok(())
    }

    /// `motion` is required by the oracle tracker and ignored otherwise.
    pub fn build(&self, motion: Option<Arc<dyn MotionField>>) -> Result<Box<dyn TrackerAdapter>> {
        self.validate()?;
        Ok(match self.name.as_str() {
            "oracle" => {
                let field = motion.ok_or_else(|| {
                    Error::config("tracker.name", "the oracle tracker needs a synthetic scene as its video")
                })?;
                Box::new(OracleTracker::new(field))
            }
            "ncc" => Box::new(NccTracker::new(self.ncc)),
            "static" => {
                let t = StaticTracker::new(Duration::from_secs_f64(self.cost_ms / 1000.0));
                Box::new(if self.supports_midstream_queries { t } else { t.without_midstream() })
            }
            "remote" => {
                let caps = TrackerCapabilities {
                    supports_visibility: self.supports_visibility,
                    supports_midstream_queries: self.supports_midstream_queries,
                };
                Box::new(SocketTracker::connect(self.addr.as_deref().unwrap_or_default(), caps)?)
            }
            _ => unreachable!("validated"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterSpec {
    #[serde(default = "default_segmenter")]
    pub name: String,
    #[serde(default = "default_intensity")]
    pub intensity_threshold: f32,
    /// Fixed inference resolution `[height, width]`.
    #[serde(default)]
    pub native_input: Option<[usize; 2]>,
    #[serde(default)]
    pub cost_ms: f64,
    #[serde(default)]
    pub addr: Option<String>,
    /// Prompt modes a `remote` segmenter accepts.
    #[serde(default = "all_modes")]
    pub prompt_modes: PromptModes,
}

fn default_segmenter() -> String {
    "threshold".into()
}

fn default_intensity() -> f32 {
    128.0
}

fn all_modes() -> PromptModes {
    PromptModes::ALL
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        Self {
            name: default_segmenter(),
            intensity_threshold: default_intensity(),
            native_input: None,
            cost_ms: 0.0,
            addr: None,
            prompt_modes: PromptModes::ALL,
        }
    }
}

impl SegmenterSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SEGMENTER_NAMES.contains(&self.name.as_str()) {
            return Err(Error::config(
                "segmenter.name",
                format!("unknown segmenter `{}` (known: {})", self.name, SEGMENTER_NAMES.join(", ")),
            ));
        }
        if let Some([h, w]) = self.native_input {
            if h == 0 || w == 0 {
                return Err(Error::config("segmenter.native_input", "dimensions must be positive"));
            }
        }
        if !(self.cost_ms >= 0.0 && self.cost_ms.is_finite()) {
            return Err(Error::config("segmenter.cost_ms", "must be a non-negative number"));
        }
        if self.name == "remote" && self.addr.is_none() {
            return Err(Error::config("segmenter.addr", "remote segmenter needs an address"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn SegmenterAdapter>> {
        self.validate()?;
        Ok(match self.name.as_str() {
            "threshold" => {
                let s = ThresholdSegmenter::new(self.intensity_threshold);
                Box::new(match self.native_input {
                    Some([h, w]) => s.with_native_input((h, w)),
                    None => s,
                })
            }
            "fixed_cost" => Box::new(FixedCostSegmenter::new(Duration::from_secs_f64(self.cost_ms / 1000.0))),
            "remote" => Box::new(SocketSegmenter::connect(
                self.addr.as_deref().unwrap_or_default(),
                self.prompt_modes,
            )?),
            _ => unreachable!("validated"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_names_are_config_errors() {
        let err = TrackerSpec::named("cotracker").build(None).err().unwrap();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "tracker.name"));
        let err = SegmenterSpec::named("sam").build().err().unwrap();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "segmenter.name"));
    }

    #[test]
    fn oracle_needs_motion() {
        assert!(matches!(TrackerSpec::named("oracle").build(None), Err(Error::Config { .. })));
    }

    #[test]
    fn specs_from_toml() {
        let t: TrackerSpec = toml::from_str("name = \"static\"\ncost_ms = 5.0\nsupports_midstream_queries = false").unwrap();
        let built = t.build(None).unwrap();
        assert!(!built.capabilities().supports_midstream_queries);
        let s: SegmenterSpec = toml::from_str("name = \"threshold\"\nnative_input = [64, 64]").unwrap();
        assert_eq!(s.build().unwrap().native_input_hw(), Some((64, 64)));
        assert!(toml::from_str::<TrackerSpec>("nmae = \"ncc\"").is_err());
    }
}
