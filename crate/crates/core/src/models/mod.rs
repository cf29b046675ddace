//! Spectral test models, observation operators and particle ensembles.

pub mod dft;
pub mod io;
pub mod ks;
pub mod observation;
pub mod st;
pub mod transform;

pub use dft::{DftWorkspace, RealDft};
pub use ks::{KsModel, KsParams};
pub use observation::{observation_nodes, ObservationModel, ObservationOperator};
pub use st::{StModel, StParams, StTables};
pub use transform::{StateTransform, Transformed};

use crate::error::{Error, Result};
use crate::rng::{self, Stream, StreamRng};
use crate::spatial::PeriodicMesh;
use rayon::prelude::*;

/// A state-space model on a periodic mesh with point observations.
///
/// States are node values. All randomness comes from the generator passed
/// in, so a fixed stream gives a bitwise fixed result.
pub trait StateSpaceModel: Send + Sync {
    fn mesh(&self) -> &PeriodicMesh;

    fn observation(&self) -> &ObservationModel;

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()>;

    /// Advance one observation interval in place. `time` is only used to
    /// label failures.
    fn forward(&self, state: &mut [f64], time: usize, rng: &mut StreamRng) -> Result<()>;

    /// Noise-free observations of `state`.
    fn predict_observations(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        self.observation().predict(state, out);
        Ok(())
    }

    fn node_count(&self) -> usize {
        self.mesh().len()
    }
}

impl<T: StateSpaceModel + ?Sized> StateSpaceModel for Box<T> {
    fn mesh(&self) -> &PeriodicMesh {
        (**self).mesh()
    }
    fn observation(&self) -> &ObservationModel {
        (**self).observation()
    }
    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        (**self).sample_initial(rng, out)
    }
    fn forward(&self, state: &mut [f64], time: usize, rng: &mut StreamRng) -> Result<()> {
        (**self).forward(state, time, rng)
    }
    fn predict_observations(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).predict_observations(state, out)
    }
}

/// `P x M` particle matrix, one row per particle.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    particles: usize,
    nodes: usize,
    data: Vec<f64>,
}

impl Ensemble {
    pub fn zeros(particles: usize, nodes: usize) -> Self {
        Self {
            particles,
            nodes,
            data: vec![0.0; particles * nodes],
        }
    }

    pub fn from_vec(particles: usize, nodes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != particles * nodes {
            return Err(Error::invalid(format!(
                "ensemble data has {} values, expected {particles} x {nodes}",
                data.len()
            )));
        }
        Ok(Self {
            particles,
            nodes,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nodes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nodes) {
            return Err(Error::invalid("ensemble rows have different lengths"));
        }
        Ok(Self {
            particles: rows.len(),
            nodes,
            data: rows.concat(),
        })
    }

    #[inline]
    pub fn particles(&self) -> usize {
        self.particles
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    #[inline]
    pub fn get(&self, p: usize, m: usize) -> f64 {
        self.data[p * self.nodes + m]
    }

    #[inline]
    pub fn set(&mut self, p: usize, m: usize, v: f64) {
        self.data[p * self.nodes + m] = v;
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.nodes..(p + 1) * self.nodes]
    }

    #[inline]
    pub fn row_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.data[p * self.nodes..(p + 1) * self.nodes]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.nodes.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..self.particles).map(|p| self.get(p, m)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Equal-weight mean over particles at every node.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.nodes];
        for row in self.rows() {
            mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / self.particles as f64;
        mean.iter_mut().for_each(|a| *a *= inv);
        mean
    }

    /// Row permutation: output row `i` is input row `order[i]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(order.len() * self.nodes);
        for &p in order {
            data.extend_from_slice(self.row(p));
        }
        Self {
            particles: order.len(),
            nodes: self.nodes,
            data,
        }
    }
}

/// Draw `particles` independent initial states. Particle `p` uses its own
/// stream, so the result does not depend on the worker count.
pub fn sample_initial_ensemble<M: StateSpaceModel + ?Sized>(
    model: &M,
    particles: usize,
    seed: u64,
    replica: u32,
) -> Result<Ensemble> {
    let mut ens = Ensemble::zeros(particles, model.node_count());
    let m = ens.nodes;
    ens.data
        .par_chunks_mut(m)
        .enumerate()
        .try_for_each(|(p, row)| {
            let mut rng = rng::stream(seed, Stream::FilterInit, replica, 0, p as u64);
            model.sample_initial(&mut rng, row)
        })?;
    Ok(ens)
}

/// Advance every particle one observation interval, each with the stream
/// indexed by `(time, particle)`.
pub fn forward_ensemble<M: StateSpaceModel + ?Sized>(
    model: &M,
    ens: &mut Ensemble,
    time: usize,
    seed: u64,
    replica: u32,
) -> Result<()> {
    let m = ens.nodes;
    ens.data
        .par_chunks_mut(m)
        .enumerate()
        .try_for_each(|(p, row)| {
            let mut rng = rng::stream(seed, Stream::FilterForward, replica, time as u64, p as u64);
            model.forward(row, time, &mut rng)
        })
}

/// Predicted observations of every particle, `P x L` row-major.
pub fn predict_ensemble_observations<M: StateSpaceModel + ?Sized>(
    model: &M,
    ens: &Ensemble,
) -> Result<Vec<f64>> {
    let l = model.observation().len();
    let mut out = vec![0.0; ens.particles * l];
    if l == 0 {
        return Ok(out);
    }
    out.par_chunks_mut(l)
        .zip(ens.data.par_chunks(ens.nodes))
        .try_for_each(|(o, row)| model.predict_observations(row, o))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_accessors() {
        let e = Ensemble::from_rows(&[vec![0.0, 1.0], vec![2.0, 5.0]]).unwrap();
        assert_eq!(e.particles(), 2);
        assert_eq!(e.nodes(), 2);
        assert_eq!(e.get(1, 1), 5.0);
        assert_eq!(e.mean(), vec![1.0, 3.0]);
        assert_eq!(e.column(0), vec![0.0, 2.0]);
        assert_eq!(e.select_rows(&[1, 1]).row(0), &[2.0, 5.0]);
        assert!(Ensemble::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn ensemble_draws_do_not_depend_on_thread_count() {
        let model = StModel::new(StParams {
            nodes: 64,
            observations: 8,
            ..StParams::default()
        })
        .unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let mut e = sample_initial_ensemble(&model, 17, 5, 0).unwrap();
                forward_ensemble(&model, &mut e, 1, 5, 0).unwrap();
                e
            })
        };
        assert_eq!(run(1), run(3));
    }
}
