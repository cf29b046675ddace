//! Point observations at equispaced mesh nodes with Gaussian noise.

use crate::error::{Error, Result};
use crate::rng::standard_normal;
use crate::spatial::PeriodicMesh;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationOperator {
    Linear,
    Tanh,
}

impl ObservationOperator {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ObservationOperator::Linear => x,
            ObservationOperator::Tanh => x.tanh(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObservationModel {
    operator: ObservationOperator,
    noise_std: f64,
    /// 0-based node index of each observation.
    nodes: Vec<usize>,
    positions: Vec<f64>,
    log_norm: f64,
}

/// 0-based nodes `(M/L)(l - 1/2) - 1` for `l = 1..=L`. Requires `2L | M` so
/// that every index is an integer.
pub fn observation_nodes(m: usize, l: usize) -> Result<Vec<usize>> {
    if l == 0 || m % (2 * l) != 0 {
        return Err(Error::invalid(format!(
            "{l} equispaced observations need 2L to divide the node count {m}"
        )));
    }
    let half_gap = m / (2 * l);
    Ok((1..=l).map(|j| (2 * j - 1) * half_gap - 1).collect())
}

impl ObservationModel {
    pub fn equispaced(
        mesh: &PeriodicMesh,
        count: usize,
        operator: ObservationOperator,
        noise_std: f64,
    ) -> Result<Self> {
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid(format!(
                "observation noise std must be positive, got {noise_std}"
            )));
        }
        let nodes = observation_nodes(mesh.len(), count)?;
        let positions = nodes.iter().map(|&n| mesh.position(n)).collect();
        let log_norm = -(noise_std * (2.0 * std::f64::consts::PI).sqrt()).ln();
        Ok(Self {
            operator,
            noise_std,
            nodes,
            positions,
            log_norm,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn operator(&self) -> ObservationOperator {
        self.operator
    }

    #[inline]
    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Noise-free observation of a node-space state.
    pub fn predict(&self, state: &[f64], out: &mut [f64]) {
        for (o, &n) in out.iter_mut().zip(&self.nodes) {
            *o = self.operator.apply(state[n]);
        }
    }

    /// Predicted observation plus independent `N(0, sigma^2)` noise.
    pub fn sample<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R, out: &mut [f64]) {
        self.predict(state, out);
        for o in out.iter_mut() {
            *o += self.noise_std * standard_normal(rng);
        }
    }

    /// Gaussian log-density of one observed value given its prediction.
    #[inline]
    pub fn log_density(&self, y: f64, predicted: f64) -> f64 {
        let z = (y - predicted) / self.noise_std;
        -0.5 * z * z + self.log_norm
    }

    /// Per-location log-densities of `y` given predicted observations.
    pub fn log_densities(&self, y: &[f64], predicted: &[f64], out: &mut [f64]) {
        for ((o, &yy), &h) in out.iter_mut().zip(y).zip(predicted) {
            *o = self.log_density(yy, h);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn model(op: ObservationOperator) -> ObservationModel {
        ObservationModel::equispaced(&PeriodicMesh::new(512).unwrap(), 64, op, 0.5).unwrap()
    }

    #[test]
    fn index_map_examples() {
        let obs = model(ObservationOperator::Linear);
        // 1-based node 4 for the first observation.
        assert_eq!(obs.nodes()[0], 3);
        assert_eq!(obs.nodes()[1], 11);
        assert_eq!(obs.nodes()[63], 507);
        assert_eq!(observation_nodes(8, 4).unwrap(), vec![0, 2, 4, 6]);
        assert!(observation_nodes(12, 8).is_err());
        assert!(observation_nodes(8, 0).is_err());
    }

    #[test]
    fn log_density_at_the_prediction_is_the_normaliser() {
        let obs = model(ObservationOperator::Linear);
        let expected = -(0.5 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((obs.log_density(1.3, 1.3) - expected).abs() < 1e-15);
        assert!((obs.log_density(1.8, 1.3) - (expected - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn tanh_of_zero_predicts_zero() {
        let obs = model(ObservationOperator::Tanh);
        let mut out = vec![1.0; 64];
        obs.predict(&[0.0; 512], &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_has_the_configured_spread() {
        let obs = model(ObservationOperator::Linear);
        let mut rng = stream(1, Stream::Test, 0, 0, 0);
        let state = vec![0.0; 512];
        let mut y = vec![0.0; 64];
        let (mut s1, mut s2, mut n) = (0.0, 0.0, 0.0);
        for _ in 0..2000 {
            obs.sample(&state, &mut rng, &mut y);
            s1 += y.iter().sum::<f64>();
            s2 += y.iter().map(|v| v * v).sum::<f64>();
            n += 64.0;
        }
        let var = s2 / n - (s1 / n).powi(2);
        assert!((var - 0.25).abs() < 0.01, "{var}");
    }

    #[test]
    fn rejects_bad_noise() {
        let mesh = PeriodicMesh::new(8).unwrap();
        assert!(ObservationModel::equispaced(&mesh, 4, ObservationOperator::Linear, 0.0).is_err());
    }
}
