//! Scoring detections against ground truth.

mod bbox;
mod matching;
mod metrics;
mod studies;

pub use bbox::BoundingBox;
pub use matching::{coupling_mae, match_candidates, Candidate, MatchPair, MatchReport};
pub use metrics::{
    aggregate, evaluate_record, evaluate_sample, robustness_sweep, signal_mae, write_audit_log,
    MetricsRow, MetricsSummary, SampleEvaluation,
};
pub use studies::{selectivity_scan, SelectivityPoint, SELECTIVITY_BASE_KHZ};
