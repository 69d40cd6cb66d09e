//! Thresholded predictions, overlap scores, per-scan reports and paired
//! significance tests.

mod metrics;
mod report;
mod segment;
mod wilcoxon;

pub use metrics::{dice_and_voe, threshold_prediction, voe_from_dice, FOREGROUND_EPSILON};
pub use report::{format_significance, EvalReport, ScanScores, Scores};
pub use segment::{evaluate_volume, predict_volume, NetworkSegmenter, OracleSegmenter, Segmenter};
pub use wilcoxon::{significance_matrix, wilcoxon_signed_rank};
