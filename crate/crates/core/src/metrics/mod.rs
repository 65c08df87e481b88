//! Accuracy / MSE gaps, significance tests and the length sweep.

mod gap;
mod stats;
mod sweep;

pub use gap::{
    gap_rows, gap_stats, score_difference_test, scored_pair, GapReportRow, GapStats, LengthSplit,
    Scored,
};
pub use stats::{
    accuracy, ln_gamma, mse, paired_t_test, regularized_incomplete_beta, stars,
    student_t_two_sided, MetricError, TTest,
};
pub use sweep::{length_sweep, parse_sentiment_label, ClassCell, SweepConfig, SweepRow, SweepTable};
