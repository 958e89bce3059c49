//! Experiment plumbing: metrics, seeded multi-run experiments, the Monte
//! Carlo distribution oracle and similarity heatmaps.

mod experiment;
mod heatmap;
mod metrics;
mod oracle;

pub use experiment::{run_experiment, run_seeds, ExperimentConfig, ExperimentResult, Outputs, SeedRun};
pub use heatmap::{export_similarity_heatmap, position_features, Heatmap};
pub use metrics::{read_jsonl, write_jsonl, Metrics, MetricsRecord, RecordKind, TraceRecord};
pub use oracle::{mc_distribution_test, McReport};
