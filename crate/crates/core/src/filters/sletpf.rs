//! Smooth local ensemble transform particle filter.
//!
//! Each patch of a partition of unity gets its own weights (observations
//! tapered by their distance to the patch support) and its own transport
//! plan (costs over the subsampled support nodes). Node values are then the
//! bump-weighted blend of the patch plans applied to the predicted
//! particles, so the node-wise coefficient matrices are convex combinations
//! of transport plans and stay left-stochastic.

use super::etpf::{new_simplex, TransportSolver};
use super::weights::{compute_local_weights, Granularity, LocalWeights};
use crate::error::{Error, Result};
use crate::models::Ensemble;
use crate::ot::{TransportPlan, TransportProblem};
use crate::spatial::{
    effective_observations, EffectiveObservations, Localisation, PartitionOfUnity,
};
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct Sletpf {
    pou: PartitionOfUnity,
    effective: EffectiveObservations,
    solver: TransportSolver,
}

#[derive(Clone, Debug)]
pub struct SletpfUpdate {
    pub ensemble: Ensemble,
    pub weights: LocalWeights,
    pub plans: Vec<TransportPlan>,
}

impl Sletpf {
    pub fn new(
        pou: PartitionOfUnity,
        obs_positions: &[f64],
        loc: &Localisation,
        solver: TransportSolver,
    ) -> Self {
        let effective = effective_observations(&pou, obs_positions, loc);
        Self {
            pou,
            effective,
            solver,
        }
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        &self.pou
    }

    pub fn effective_observations(&self) -> &EffectiveObservations {
        &self.effective
    }

    /// Per-patch squared distances over the patch's cost nodes.
    fn patch_costs(&self, ens: &Ensemble, patch: usize) -> Vec<f64> {
        let p = ens.particles();
        let nodes = self.pou.cost_nodes(patch);
        let k = nodes.len();
        let mut vals = vec![0.0; p * k];
        for i in 0..p {
            let row = ens.row(i);
            for (j, &n) in nodes.iter().enumerate() {
                vals[i * k + j] = row[n];
            }
        }
        let mut cost = vec![0.0; p * p];
        for i in 0..p {
            let a = &vals[i * k..(i + 1) * k];
            for j in 0..i {
                let b = &vals[j * k..(j + 1) * k];
                let c: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                cost[i * p + j] = c;
                cost[j * p + i] = c;
            }
        }
        cost
    }

    /// Assimilate given the `P x L` observation log-likelihoods of the
    /// predicted particles.
    pub fn assimilate(&self, ens: &Ensemble, log_likelihoods: &[f64]) -> Result<SletpfUpdate> {
        let (p, m) = (ens.particles(), ens.nodes());
        if p < 2 {
            return Err(Error::invalid(
                "transform filter needs at least two particles",
            ));
        }
        if m != self.pou.node_count() {
            return Err(Error::invalid(
                "partition of unity does not match the ensemble",
            ));
        }
        let weights = compute_local_weights(
            log_likelihoods,
            p,
            Granularity::Local(&self.effective.weights),
        )?;
        let plans: Vec<TransportPlan> = (0..self.pou.patch_count())
            .into_par_iter()
            .map_init(new_simplex, |simplex, b| {
                let problem =
                    TransportProblem::new(weights.unit(b).to_vec(), self.patch_costs(ens, b))?;
                self.solver.solve(&problem, simplex)
            })
            .enumerate()
            .map(|(b, r)| {
                r.map_err(|e| Error::PatchTransport {
                    patch: b,
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()?;

        // Patch-major accumulation keeps the summation order fixed.
        let mut out = Ensemble::zeros(p, m);
        let data = out.as_mut_slice();
        for (b, plan) in plans.iter().enumerate() {
            let nz = plan.nonzeros();
            for &n in self.pou.support(b) {
                let phi = self.pou.bump(b, n);
                for &(i, j, v) in &nz {
                    data[i * m + n] += phi * v * ens.get(j, n);
                }
            }
        }
        Ok(SletpfUpdate {
            ensemble: out,
            weights,
            plans,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::etpf::{etpf_assimilate, local_etpf_assimilate};
    use crate::rng::{standard_normal, stream, Stream};
    use crate::spatial::{
        build_equal_partition, build_pou, periodic_distance, LocalisationKind, PeriodicMesh,
    };
    use rand::Rng;

    fn random_ensemble(p: usize, m: usize, seed: u64) -> Ensemble {
        let mut rng = stream(seed, Stream::Test, 0, 0, 0);
        Ensemble::from_vec(
            p,
            m,
            (0..p * m).map(|_| standard_normal(&mut rng)).collect(),
        )
        .unwrap()
    }

    fn random_loglik(p: usize, l: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Stream::Test, 1, 0, 0);
        (0..p * l).map(|_| -2.0 * rng.random::<f64>()).collect()
    }

    fn pou(m: usize, b: usize, w: f64) -> PartitionOfUnity {
        let mesh = PeriodicMesh::new(m).unwrap();
        build_pou(build_equal_partition(&mesh, b).unwrap(), &mesh, w).unwrap()
    }

    #[test]
    fn uniform_weights_leave_the_ensemble() {
        let ens = random_ensemble(7, 32, 1);
        let obs: Vec<f64> = (0..4).map(|l| (8 * l + 3) as f64 / 32.0).collect();
        let filter = Sletpf::new(
            pou(32, 4, 1.0 / 16.0),
            &obs,
            &Localisation::gaspari_cohn(0.1).unwrap(),
            TransportSolver::Exact,
        );
        let out = filter.assimilate(&ens, &vec![-0.5; 7 * 4]).unwrap();
        for (a, b) in out.ensemble.as_slice().iter().zip(ens.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_patch_equals_global_filter() {
        let (p, m, l) = (9, 32, 4);
        let ens = random_ensemble(p, m, 2);
        let ll = random_loglik(p, l, 2);
        let obs: Vec<f64> = (0..l).map(|j| (8 * j + 3) as f64 / 32.0).collect();
        let loc = Localisation::new(LocalisationKind::Uniform, 0.01).unwrap();
        let filter = Sletpf::new(pou(m, 1, 1.0 / 32.0), &obs, &loc, TransportSolver::Exact);
        let out = filter.assimilate(&ens, &ll).unwrap();
        let global = compute_local_weights(&ll, p, Granularity::Global).unwrap();
        let reference = etpf_assimilate(
            &ens,
            global.unit(0),
            Some(filter.pou().subsample()),
            TransportSolver::Exact,
        )
        .unwrap();
        for (a, b) in out.ensemble.as_slice().iter().zip(reference.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_node_partition_equals_per_node_filter() {
        let (p, m, l) = (8, 32, 4);
        let mesh = PeriodicMesh::new(m).unwrap();
        let obs: Vec<f64> = (0..l).map(|j| (8 * j + 3) as f64 / 32.0).collect();
        let loc = Localisation::gaspari_cohn(0.2).unwrap();
        for seed in 0..5 {
            let ens = random_ensemble(p, m, 10 + seed);
            let ll = random_loglik(p, l, 10 + seed);
            let all: Vec<usize> = (0..m).collect();
            let hard = pou(m, m, 1.0 / m as f64).with_subsample(all).unwrap();
            let filter = Sletpf::new(hard, &obs, &loc, TransportSolver::Exact);
            let out = filter.assimilate(&ens, &ll).unwrap();
            // Reference: node weights from node-to-observation distances.
            let tapers: Vec<Vec<(usize, f64)>> = (0..m)
                .map(|n| {
                    obs.iter()
                        .enumerate()
                        .map(|(j, &s)| (j, loc.weight(periodic_distance(mesh.position(n), s))))
                        .filter(|&(_, w)| w > 0.0)
                        .collect()
                })
                .collect();
            let node_w = compute_local_weights(&ll, p, Granularity::Local(&tapers)).unwrap();
            let reference = local_etpf_assimilate(&ens, &node_w, TransportSolver::Exact).unwrap();
            for (a, b) in out.ensemble.as_slice().iter().zip(reference.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn node_means_match_blended_weights() {
        let (p, m, l) = (10, 64, 8);
        let obs: Vec<f64> = (0..l).map(|j| (8 * j + 3) as f64 / 64.0).collect();
        let loc = Localisation::gaspari_cohn(0.05).unwrap();
        let filter = Sletpf::new(pou(m, 8, 1.0 / 32.0), &obs, &loc, TransportSolver::Exact);
        let ens = random_ensemble(p, m, 3);
        let out = filter.assimilate(&ens, &random_loglik(p, l, 3)).unwrap();
        let mean = out.ensemble.mean();
        for n in 0..m {
            let target: f64 = filter
                .pou()
                .node_patches(n)
                .iter()
                .map(|&(b, phi)| {
                    phi * (0..p)
                        .map(|q| out.weights.unit(b)[q] * ens.get(q, n))
                        .sum::<f64>()
                })
                .sum();
            assert!((mean[n] - target).abs() < 1e-10);
        }
    }

    #[test]
    fn output_does_not_depend_on_thread_count() {
        let (p, m, l) = (12, 64, 8);
        let obs: Vec<f64> = (0..l).map(|j| (8 * j + 3) as f64 / 64.0).collect();
        let filter = Sletpf::new(
            pou(m, 16, 1.0 / 64.0),
            &obs,
            &Localisation::gaspari_cohn(0.04).unwrap(),
            TransportSolver::Exact,
        );
        let ens = random_ensemble(p, m, 4);
        let ll = random_loglik(p, l, 4);
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| filter.assimilate(&ens, &ll).unwrap().ensemble)
        };
        assert_eq!(run(1), run(4));
    }
}
