//! Ensemble transform particle filters: resampling replaced by the linear
//! map given by an optimal transport plan between the weighted and the
//! uniform ensemble.

use super::weights::LocalWeights;
use crate::error::{Error, Result};
use crate::models::Ensemble;
use crate::ot::{
    solve_entropic, NetworkSimplex, PivotRule, SinkhornOptions, TransportPlan, TransportProblem,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransportSolver {
    Exact,
    Entropic { lambda: f64 },
}

impl Default for TransportSolver {
    fn default() -> Self {
        TransportSolver::Exact
    }
}

impl TransportSolver {
    /// Solve with a caller-owned simplex workspace so threads can reuse it.
    pub fn solve(
        &self,
        problem: &TransportProblem,
        simplex: &mut NetworkSimplex,
    ) -> Result<TransportPlan> {
        match *self {
            TransportSolver::Exact => simplex.solve(problem),
            TransportSolver::Entropic { lambda } => {
                solve_entropic(problem, lambda, SinkhornOptions::default())
            }
        }
    }
}

pub(crate) fn new_simplex() -> NetworkSimplex {
    NetworkSimplex::new(PivotRule::BlockSearch)
}

/// `c_pq = sum_{m in nodes} (x_pm - x_qm)^2`, row-major `P x P`.
pub fn squared_distance_costs(ens: &Ensemble, nodes: &[usize]) -> Vec<f64> {
    let p = ens.particles();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|i| nodes.iter().map(|&n| ens.get(i, n)).collect())
        .collect();
    let mut cost = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..i {
            let c: f64 = cols[i]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            cost[i * p + j] = c;
            cost[j * p + i] = c;
        }
    }
    cost
}

/// `x_p = sum_q rho_pq xhat_q` for every node.
pub fn apply_plan(ens: &Ensemble, plan: &TransportPlan) -> Ensemble {
    let mut out = Ensemble::zeros(ens.particles(), ens.nodes());
    for (p, q, v) in plan.nonzeros() {
        let src = ens.row(q).to_vec();
        out.row_mut(p)
            .iter_mut()
            .zip(&src)
            .for_each(|(o, s)| *o += v * s);
    }
    out
}

/// Global ETPF with squared Euclidean costs over `cost_nodes` (all nodes
/// when `None`).
pub fn etpf_assimilate(
    ens: &Ensemble,
    weights: &[f64],
    cost_nodes: Option<&[usize]>,
    solver: TransportSolver,
) -> Result<Ensemble> {
    if ens.particles() < 2 || weights.len() != ens.particles() {
        return Err(Error::invalid(
            "transform filter needs P >= 2 weights matching the ensemble",
        ));
    }
    let all: Vec<usize>;
    let nodes = match cost_nodes {
        Some(n) => n,
        None => {
            all = (0..ens.nodes()).collect();
            &all
        }
    };
    let problem = TransportProblem::new(weights.to_vec(), squared_distance_costs(ens, nodes))?;
    let plan = solver.solve(&problem, &mut new_simplex())?;
    Ok(apply_plan(ens, &plan))
}

/// Per-node local ETPF: every node solves its own transport problem with
/// its local weights and the one-node cost `(x_pm - x_qm)^2`.
pub fn local_etpf_assimilate(
    ens: &Ensemble,
    node_weights: &LocalWeights,
    solver: TransportSolver,
) -> Result<Ensemble> {
    let (p, m) = (ens.particles(), ens.nodes());
    if node_weights.units() != m || node_weights.particles() != p {
        return Err(Error::invalid("node weights do not match the ensemble"));
    }
    let mut simplex = new_simplex();
    let mut out = Ensemble::zeros(p, m);
    for node in 0..m {
        let col = ens.column(node);
        let mut cost = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                cost[i * p + j] = (col[i] - col[j]).powi(2);
            }
        }
        let problem = TransportProblem::new(node_weights.unit(node).to_vec(), cost)?;
        let plan = solver
            .solve(&problem, &mut simplex)
            .map_err(|e| Error::NodeUpdate {
                node,
                source: Box::new(e),
            })?;
        for (i, j, v) in plan.nonzeros() {
            out.set(i, node, out.get(i, node) + v * col[j]);
        }
    }
    Ok(out)
}
