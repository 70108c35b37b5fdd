//! Assembly metrics, order perturbation and dataset evaluation.

mod harness;
mod metrics;

pub use harness::{
    attention_hits, attention_rasters, buckets_csv, diagram_mass, evaluate, evaluate_sample, kt_buckets, kt_sweep,
    score_prediction, sweep_csv, AttentionHits, BucketRow, EvalReport, EvalSample, OrderMode, SampleMetrics,
    SweepRow, KT_BUCKETS,
};
pub use metrics::{
    accurate_parts, kendall_tau, part_accuracy, perturb_order_gumbel, scd, success_rate, MetricConfig,
};
