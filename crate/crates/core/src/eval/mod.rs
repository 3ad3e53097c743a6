//! Cross-validation splits and classification metrics.

mod metrics;
mod splits;

pub use metrics::{
    argmax, auc_score, aupr_score, compute_metrics, MetricReport, MetricSummary, RankAveraging,
};
pub use splits::{make_splits, Fold, SplitPlan, Task};
