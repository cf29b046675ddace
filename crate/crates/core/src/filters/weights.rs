//! Particle weights from observation log-likelihoods, globally or per
//! spatial unit (node or patch) with tapered observation influence.

use crate::error::{Error, Result};
use crate::models::ObservationModel;

/// Which observations enter the weights of each unit, and with what taper.
#[derive(Clone, Copy, Debug)]
pub enum Granularity<'a> {
    /// One unit seeing every observation with weight 1.
    Global,
    /// One unit per listed entry, with `(observation, taper)` pairs.
    Local(&'a [Vec<(usize, f64)>]),
}

/// Normalised weights, `units x P` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWeights {
    units: usize,
    particles: usize,
    weights: Vec<f64>,
    /// Units whose log-weights were all non-finite and fell back to uniform.
    pub degenerate_units: usize,
}

impl LocalWeights {
    #[inline]
    pub fn units(&self) -> usize {
        self.units
    }

    #[inline]
    pub fn particles(&self) -> usize {
        self.particles
    }

    #[inline]
    pub fn unit(&self, u: usize) -> &[f64] {
        &self.weights[u * self.particles..(u + 1) * self.particles]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    /// Normalise `units x P` log-weights by log-sum-exp per unit.
    pub fn from_log_weights(log_weights: &[f64], particles: usize) -> Result<Self> {
        if particles == 0 || log_weights.len() % particles != 0 {
            return Err(Error::invalid(
                "log-weights are not a whole number of units",
            ));
        }
        let units = log_weights.len() / particles;
        let mut weights = vec![0.0; log_weights.len()];
        let mut degenerate_units = 0;
        for (out, lw) in weights
            .chunks_exact_mut(particles)
            .zip(log_weights.chunks_exact(particles))
        {
            if !normalise_into(lw, out) {
                degenerate_units += 1;
                out.iter_mut().for_each(|w| *w = 1.0 / particles as f64);
            }
        }
        Ok(Self {
            units,
            particles,
            weights,
            degenerate_units,
        })
    }
}

/// Write `softmax(log_w)` into `out`; false when no entry is finite or a
/// value is `NaN`.
fn normalise_into(log_w: &[f64], out: &mut [f64]) -> bool {
    if log_w.iter().any(|v| v.is_nan()) {
        return false;
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return false;
    }
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(log_w) {
        *o = (v - max).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    true
}

/// Per-particle, per-location observation log-densities, `P x L` row-major,
/// from predicted observations `P x L`.
pub fn observation_log_likelihoods(
    obs: &ObservationModel,
    predicted: &[f64],
    y: &[f64],
) -> Vec<f64> {
    let l = y.len();
    let mut out = vec![0.0; predicted.len()];
    for (o, pred) in out.chunks_exact_mut(l).zip(predicted.chunks_exact(l)) {
        obs.log_densities(y, pred, o);
    }
    out
}

/// Tapered sums of `P x L` log-likelihoods for each unit, normalised.
pub fn compute_local_weights(
    log_likelihoods: &[f64],
    particles: usize,
    granularity: Granularity<'_>,
) -> Result<LocalWeights> {
    if particles == 0 || log_likelihoods.len() % particles != 0 {
        return Err(Error::invalid("log-likelihoods are not P x L"));
    }
    let l = log_likelihoods.len() / particles;
    let log_w = match granularity {
        Granularity::Global if l == 0 => vec![0.0; particles],
        Granularity::Global => log_likelihoods
            .chunks_exact(l)
            .map(|row| row.iter().sum())
            .collect(),
        Granularity::Local(tapers) => {
            let mut log_w = vec![0.0; tapers.len() * particles];
            for (u, taper) in tapers.iter().enumerate() {
                if taper.iter().any(|&(o, _)| o >= l) {
                    return Err(Error::invalid("taper refers to a missing observation"));
                }
                for p in 0..particles {
                    let row = &log_likelihoods[p * l..(p + 1) * l];
                    log_w[u * particles + p] = taper.iter().map(|&(o, w)| w * row[o]).sum();
                }
            }
            log_w
        }
    };
    LocalWeights::from_log_weights(&log_w, particles)
}
