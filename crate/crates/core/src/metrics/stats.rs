use crate::error::{Error, Result};
use crate::models::Ensemble;
use serde::{Deserialize, Serialize};

/// Equal-weight mean and standard deviation (population `1/P` form) at
/// every node.
pub fn ensemble_stats(ens: &Ensemble) -> (Vec<f64>, Vec<f64>) {
    let mean = ens.mean();
    let mut var = vec![0.0; ens.nodes()];
    for row in ens.rows() {
        for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - mu) * (x - mu);
        }
    }
    let inv = 1.0 / ens.particles() as f64;
    let std = var.into_iter().map(|v| (v * inv).sqrt()).collect();
    (mean, std)
}

/// `sum_m |x_m - x_{m+1}|` with periodic wraparound.
pub fn smoothness_coefficient(field: &[f64]) -> f64 {
    let m = field.len();
    (0..m).map(|i| (field[i] - field[(i + 1) % m]).abs()).sum()
}

/// Particle average of the smoothness coefficient.
pub fn ensemble_smoothness(ens: &Ensemble) -> f64 {
    ens.rows().map(smoothness_coefficient).sum::<f64>() / ens.particles() as f64
}

/// Root mean squared difference over all entries.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "cannot compare {} estimates against {} reference values",
            estimate.len(),
            truth.len()
        )));
    }
    let sum: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// Time- and space-averaged RMSE of `T x M` means.
pub fn rmse_mean(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(estimate, truth)
}

/// Time- and space-averaged RMSE of `T x M` standard deviations.
pub fn rmse_std(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(estimate, truth)
}

/// Time-averaged RMSE of per-time smoothness coefficients.
pub fn rmse_smoothness(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    rmse(estimate, truth)
}

/// Summary of one filtering run against ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub rmse_smoothness: f64,
    pub median_n_eff: f64,
    pub assim_seconds: f64,
}
