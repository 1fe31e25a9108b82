use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{EvalSummary, LatencyBench, MemoryProvenance};
use crate::stats::LatencyStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
}

impl From<LatencyStats> for LatencySummary {
    fn from(s: LatencyStats) -> Self {
        LatencySummary {
            p50: s.p50,
            p90: s.p90,
            p99: s.p99,
            mean: s.mean,
        }
    }
}

/// Accuracy and efficiency of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub method: String,
    pub dataset: String,
    pub mean_iou: Option<f64>,
    pub mean_dice: Option<f64>,
    /// Keyed by device label.
    pub latency_ms: BTreeMap<String, LatencySummary>,
    pub peak_inference_memory_gb: Option<f64>,
    pub memory_provenance: MemoryProvenance,
    pub learnable_params_m: Option<f64>,
}

impl BenchReport {
    pub fn new(method: impl Into<String>, dataset: impl Into<String>) -> Self {
        BenchReport {
            method: method.into(),
            dataset: dataset.into(),
            mean_iou: None,
            mean_dice: None,
            latency_ms: BTreeMap::new(),
            peak_inference_memory_gb: None,
            memory_provenance: MemoryProvenance::Unavailable,
            learnable_params_m: None,
        }
    }

    pub fn with_accuracy(mut self, summary: &EvalSummary) -> Self {
        self.mean_iou = Some(summary.mean_iou);
        self.mean_dice = Some(summary.mean_dice);
        self
    }

    pub fn add_latency(&mut self, bench: &LatencyBench) {
        self.latency_ms.insert(bench.device.clone(), bench.stats.into());
        if let Some(gb) = bench.memory.gigabytes() {
            let cur = self.peak_inference_memory_gb.unwrap_or(0.0);
            if gb >= cur {
                self.peak_inference_memory_gb = Some(gb);
                self.memory_provenance = bench.memory.provenance;
            }
        }
    }

    /// Aligned-column table: an accuracy block and an efficiency block with
    /// one row per device.
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", v * 100.0));
        let num = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:<20} {:>6} {:>6}", "Method", "Dataset", "IoU", "Dice");
        let _ = writeln!(
            out,
            "{:<20} {:<20} {:>6} {:>6}",
            self.method,
            self.dataset,
            pct(self.mean_iou),
            pct(self.mean_dice)
        );
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<20} {:<12} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}",
            "Method", "Device", "p50 ms", "p90 ms", "p99 ms", "mean ms", "Memory G", "Params M"
        );
        let mem = num(self.peak_inference_memory_gb, 2);
        let params = num(self.learnable_params_m, 1);
        if self.latency_ms.is_empty() {
            let _ = writeln!(
                out,
                "{:<20} {:<12} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10}",
                self.method, "-", "-", "-", "-", "-", mem, params
            );
        }
        for (device, l) in &self.latency_ms {
            let _ = writeln!(
                out,
                "{:<20} {:<12} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>10} {:>10}",
                self.method, device, l.p50, l.p90, l.p99, l.mean, mem, params
            );
        }
        let prov = match self.memory_provenance {
            MemoryProvenance::Backend => "backend peak",
            MemoryProvenance::ResidentSetDelta => "resident-set delta",
            MemoryProvenance::Unavailable => "unavailable",
        };
        let _ = writeln!(out, "memory: {prov}");
        out
    }
}
