//! Confusion matrices, weighted metrics, fold aggregation and reports.

mod metrics;
mod report;

pub use metrics::{
    aggregate_folds, confusion, format_pct, metrics, metrics_with, per_class, round2, Averaging,
    ClassMetrics, ConfusionMatrix, MetricsRow,
};
pub use report::{
    build_report, comparison_table, duration_table, fold_table, format_duration, render_report,
    DurationRow, FoldRow, ModelReport, Report,
};
