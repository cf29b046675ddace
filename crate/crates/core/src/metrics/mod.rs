//! Accuracy metrics against ground truth, rank histograms and ground-truth
//! generators.

mod ground_truth;
mod rank;
mod stats;

pub use ground_truth::{
    pushforward_belief, pushforward_ground_truth, GroundTruth, GroundTruthSource,
};
pub use rank::{chi_square_uniform, rank_histogram, write_rank_histogram_csv, RankHistogram};
pub use stats::{
    ensemble_smoothness, ensemble_stats, rmse, rmse_mean, rmse_smoothness, rmse_std,
    smoothness_coefficient, MetricsRecord,
};
