//! Random resampling schemes producing ancestor indices.

use super::weights::LocalWeights;
use crate::models::Ensemble;
use rand::Rng;

/// Index of the first cumulative weight exceeding `u`, clamped to the last
/// particle with positive weight so rounding never selects a null particle.
fn invert_cdf(cdf: &[f64], u: f64, last_positive: usize) -> usize {
    cdf.partition_point(|&c| c <= u).min(last_positive)
}

fn cumulative(weights: &[f64]) -> (Vec<f64>, usize) {
    let mut acc = 0.0;
    let cdf = weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let last_positive = weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1);
    (cdf, last_positive)
}

/// `P` independent draws from the weights.
pub fn resample_multinomial<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let (cdf, last) = cumulative(weights);
    let total = cdf[cdf.len() - 1];
    (0..weights.len())
        .map(|_| invert_cdf(&cdf, rng.random::<f64>() * total, last))
        .collect()
}

/// Stratified points `(i + u) / P` sharing one uniform `u`.
pub fn resample_systematic<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let p = weights.len();
    let (cdf, last) = cumulative(weights);
    let total = cdf[p - 1];
    let u: f64 = rng.random();
    (0..p)
        .map(|i| invert_cdf(&cdf, (i as f64 + u) / p as f64 * total, last))
        .collect()
}

/// Independent multinomial ancestors at every node, `M` vectors of length
/// `P`. Adjacent nodes generally pick different ancestors, so the result
/// is spatially discontinuous.
pub fn resample_local_independent<R: Rng + ?Sized>(
    node_weights: &LocalWeights,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    (0..node_weights.units())
        .map(|n| resample_multinomial(node_weights.unit(n), rng))
        .collect()
}

/// Copy ancestor values node by node.
pub fn apply_node_ancestors(ens: &Ensemble, ancestors: &[Vec<usize>]) -> Ensemble {
    let mut out = Ensemble::zeros(ens.particles(), ens.nodes());
    for (m, anc) in ancestors.iter().enumerate() {
        for (p, &a) in anc.iter().enumerate() {
            out.set(p, m, ens.get(a, m));
        }
    }
    out
}
