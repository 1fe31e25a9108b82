//! Video object segmentation by tracking sparse query points and prompting
//! a point-promptable segmenter with them on every frame.

pub mod config;
pub mod error;
pub mod evalbench;
pub mod finetune;
pub mod frame;
pub mod geometry;
pub mod mask;
pub mod maskio;
pub mod pipeline;
pub mod points;
pub mod protocol;
pub mod registry;
pub mod rle;
pub mod sampling;
pub mod segmenters;
pub mod stats;
pub mod synthetic;
pub mod trackers;
pub mod video;

pub use error::{Error, Result};
pub use frame::Frame;
pub use geometry::{rescale_points, BoxPrompt, Point};
pub use mask::{BinaryMask, InstanceMaskSet, MaskSetRecord};
pub use points::{QueryPointSet, TrackedPointSet};
pub use rle::{mask_to_rle, rle_to_mask, Rle};
pub use sampling::{sample_query_points, SamplingStrategy, StrategyKind};
pub use segmenters::{segment, PromptBundle, PromptModes, SegmenterAdapter};
pub use trackers::{MotionField, TrackerAdapter, TrackerCapabilities, TrackerSession};

/// Version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
