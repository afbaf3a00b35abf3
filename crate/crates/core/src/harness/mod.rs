//! Run configuration, the outer training loops, metrics, sweeps, and plots.

mod config;
mod metrics;
mod plot;
mod rng;
mod sweep;
mod train;

pub use config::{output_root, Algorithm, TrainConfig, OUTPUT_ROOT_VAR};
pub use metrics::{CurveMetric, IterationRecord, MetricsHeader, RunMetrics, METRICS_SCHEMA};
pub use plot::{emit_plots, render_svg, Series};
pub use rng::{eval_seeds, stream, RngStreams, Stream};
pub use train::{train, train_match, train_ppo, train_replay, Trainer, CHECKPOINT_SCHEMA, TRAINED_STEP_CAP};
pub use sweep::{
    aggregate, expand, mean_std, summarize, sweep, CurvePoint, GroupSummary, MetricSummary, RunFailure, SweepJob, SweepOptions,
    SweepOutcome, SweepReport,
};
