//! Accuracy metrics, dataset ingestion, and the efficiency bench
//! (latency, inference memory, learnable parameters).

mod bench;
mod dataset;
mod metrics;
mod report;

#[cfg(test)]
mod tests;

pub use bench::{
    bench_latency, count_learnable_params, measure_memory, BenchConfig, LatencyBench, MemoryProvenance, MemoryReport,
    ParameterInventory,
};
pub use dataset::{ingest_dataset, Dataset, DatasetLayout, LabeledFrame};
pub use metrics::{
    dice, evaluate_frame, evaluate_run, greedy_match, iou, BinaryTag, EvalSummary, GtKind, MetricRecord, Target,
};
pub use report::{BenchReport, LatencySummary};
