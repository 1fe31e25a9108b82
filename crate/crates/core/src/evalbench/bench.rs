use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finetune::{FreezeMap, ParamGroup};
use crate::frame::Frame;
use crate::pipeline::PipelineSession;
use crate::stats::LatencyStats;
use crate::video::VideoSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Frames processed before timing starts; the initialization frame is
    /// the first of them.
    pub warmup_frames: usize,
    /// Minimum number of timed frames.
    pub measured_frames: usize,
    pub device: String,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            warmup_frames: 20,
            measured_frames: 200,
            device: "cpu".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyBench {
    pub device: String,
    pub warmup_frames: usize,
    pub stats: LatencyStats,
    /// `(frame_index, milliseconds)` for every timed frame.
    pub samples: Vec<(u64, f64)>,
    pub memory: MemoryReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryProvenance {
    /// Peak device memory reported by the adapters.
    Backend,
    /// Growth of the process's peak resident set over the bench.
    ResidentSetDelta,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub peak_bytes: Option<u64>,
    pub provenance: MemoryProvenance,
}

impl MemoryReport {
    pub fn gigabytes(&self) -> Option<f64> {
        self.peak_bytes.map(|b| b as f64 / 1e9)
    }
}

fn proc_status_kb(field: &str) -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix(field)?.trim().strip_suffix("kB")?.trim().parse().ok())
}

/// Current resident set size in bytes, where the platform exposes it.
fn resident_bytes() -> Option<u64> {
    proc_status_kb("VmRSS:").map(|kb| kb * 1024)
}

/// Prefer the adapters' own peak, else the resident-set high-water mark
/// above `baseline`.
pub fn measure_memory(session: &PipelineSession, baseline: Option<u64>) -> MemoryReport {
    if let Some(b) = session.peak_memory_bytes() {
        return MemoryReport {
            peak_bytes: Some(b),
            provenance: MemoryProvenance::Backend,
        };
    }
    match (proc_status_kb("VmHWM:"), baseline) {
        (Some(hwm), Some(base)) => MemoryReport {
            peak_bytes: Some((hwm * 1024).saturating_sub(base)),
            provenance: MemoryProvenance::ResidentSetDelta,
        },
        _ => MemoryReport {
            peak_bytes: None,
            provenance: MemoryProvenance::Unavailable,
        },
    }
}

/// Time the track+segment path per frame.
///
/// `start` builds the session on the first frame. Decoding is outside the
/// timed region. The first `warmup_frames` frames (the initialization frame
/// included) are discarded; every later frame is timed, and there must be at
/// least `measured_frames` of them. The raw samples are written to
/// `raw_csv` as `frame_index,latency_ms`.
pub fn bench_latency(
    start: impl FnOnce(&Frame) -> Result<PipelineSession>,
    video: &mut dyn VideoSource,
    config: &BenchConfig,
    raw_csv: &Path,
) -> Result<LatencyBench> {
    if config.warmup_frames == 0 {
        return Err(Error::config("bench.warmup_frames", "must include the initialization frame"));
    }
    let needed = config.warmup_frames + config.measured_frames;
    if let Some(n) = video.len_hint() {
        if (n as usize) < needed {
            return Err(Error::InsufficientData {
                needed,
                got: n as usize,
            });
        }
    }
    let baseline = resident_bytes();
    let first = video
        .next_frame()?
        .ok_or(Error::InsufficientData { needed, got: 0 })?;
    let mut session = start(&first)?;
    let mut seen = 1usize;
    let mut samples = Vec::new();
    while let Some(frame) = video.next_frame()? {
        let t0 = Instant::now();
        session.process_frame(&frame)?;
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        if seen >= config.warmup_frames {
            samples.push((frame.index, ms));
        }
        seen += 1;
    }
    if samples.len() < config.measured_frames {
        return Err(Error::InsufficientData { needed, got: seen });
    }
    let mut w = csv::Writer::from_path(raw_csv).map_err(|e| Error::invalid(format!("cannot write {}: {e}", raw_csv.display())))?;
    let csv_err = |e: csv::Error| Error::invalid(format!("cannot write {}: {e}", raw_csv.display()));
    w.write_record(["frame_index", "latency_ms"]).map_err(csv_err)?;
    for (i, ms) in &samples {
        w.write_record([i.to_string(), ms.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(raw_csv, e))?;
    let values: Vec<f64> = samples.iter().map(|s| s.1).collect();
    Ok(LatencyBench {
        device: config.device.clone(),
        warmup_frames: config.warmup_frames,
        stats: LatencyStats::from_samples(&values).expect("at least one sample"),
        samples,
        memory: measure_memory(&session, baseline),
    })
}

/// Models that can list their parameter groups.
pub trait ParameterInventory {
    /// `(group tag, scalar count)` per parameter slice.
    fn parameter_groups(&self) -> Result<Vec<(String, usize)>> {
        Err(Error::Capability("model does not expose its parameters".into()))
    }
}

/// Learnable parameters in millions, to one decimal: the sum over groups the
/// freeze map leaves trainable. Tags outside the known groups count as
/// learnable.
pub fn count_learnable_params(model: &dyn ParameterInventory, freeze: &FreezeMap) -> Result<f64> {
    let total: usize = model
        .parameter_groups()?
        .iter()
        .filter(|(tag, _)| !ParamGroup::from_tag(tag).is_some_and(|g| freeze.is_frozen(g)))
        .map(|(_, n)| n)
        .sum();
    Ok((total as f64 / 1e5).round() / 10.0)
}
