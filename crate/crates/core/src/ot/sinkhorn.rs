//! Entropically regularised transport by log-domain Sinkhorn iteration.

use super::problem::{SolverKind, TransportPlan, TransportProblem};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct SinkhornOptions {
    /// Bound on the largest marginal violation at termination.
    pub tol: f64,
    /// Cap on the total number of row-column sweeps.
    pub max_iter: usize,
    /// Anneal the regulariser down from the cost scale before iterating at
    /// the requested value. The fixed point is unchanged.
    pub anneal: bool,
    /// Switch to Newton steps on the row potentials once the marginal
    /// error is below `NEWTON_SWITCH`. The fixed point is unchanged.
    pub newton: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            anneal: true,
            newton: true,
        }
    }
}

/// Marginal tolerance used by intermediate annealing stages.
const STAGE_TOL: f64 = 1e-3;
const STAGE_FACTOR: f64 = 0.1;
const NEWTON_SWITCH: f64 = 1e-1;
const NEWTON_STEPS: usize = 200;

/// Minimise `<rho, c> + lambda * sum rho (log rho - 1)` over couplings with
/// unit rows and columns `P * w_q`.
pub fn solve_entropic(
    problem: &TransportProblem,
    lambda: f64,
    options: SinkhornOptions,
) -> Result<TransportPlan> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!(
            "regulariser must be positive, got {lambda}"
        )));
    }
    let p = problem.size();
    let active = problem.active_columns();
    let n = active.len();
    let mut cost = Vec::with_capacity(p * n);
    for i in 0..p {
        cost.extend(active.iter().map(|&q| problem.cost(i, q)));
    }
    let mut cost_t = vec![0.0; p * n];
    for i in 0..p {
        for j in 0..n {
            cost_t[j * p + i] = cost[i * n + j];
        }
    }
    let log_b: Vec<f64> = active
        .iter()
        .map(|&q| (p as f64 * problem.weights()[q]).ln())
        .collect();

    let mut f = vec![0.0; p];
    let mut g = vec![0.0; n];
    let mut f_next = vec![0.0; p];
    let mut iterations = 0;

    let mut stages = Vec::new();
    if options.anneal {
        let mut eps = problem.max_cost().max(lambda);
        while eps > lambda {
            stages.push(eps);
            eps *= STAGE_FACTOR;
        }
    }
    stages.push(lambda);

    let mut last_error = f64::INFINITY;
    let mut newton_after = 0;
    for (s, &eps) in stages.iter().enumerate() {
        let final_stage = s + 1 == stages.len();
        let stage_tol = if final_stage {
            options.tol
        } else {
            STAGE_TOL.max(options.tol)
        };
        loop {
            if iterations >= options.max_iter {
                return Err(Error::SinkhornNotConverged {
                    iterations,
                    marginal_error: last_error,
                });
            }
            iterations += 1;

            // Column update: afterwards every column marginal is exact.
            for j in 0..n {
                let row = &cost_t[j * p..(j + 1) * p];
                g[j] = eps * log_b[j]
                    - eps * log_sum_exp(f.iter().zip(row).map(|(fi, c)| (fi - c) / eps));
            }
            // Row update; the ratio of old to new row scaling is the current
            // row sum, so the violation comes for free.
            let mut err: f64 = 0.0;
            for i in 0..p {
                let row = &cost[i * n..(i + 1) * n];
                f_next[i] = -eps * log_sum_exp(g.iter().zip(row).map(|(gj, c)| (gj - c) / eps));
                err = err.max((((f[i] - f_next[i]) / eps).exp() - 1.0).abs());
            }
            last_error = err;
            if err <= stage_tol {
                // Keep `f` so that columns stay exact and rows are within tol.
                break;
            }
            if options.newton && err <= NEWTON_SWITCH && iterations >= newton_after {
                // A stalled polish falls back to plain sweeps for a while.
                newton_after = iterations + 100;
                if let Some(e) =
                    newton_polish(&cost, &cost_t, &log_b, eps, stage_tol, &mut f, &mut g)
                {
                    last_error = e;
                    if e <= stage_tol {
                        break;
                    }
                    continue;
                }
            }
            std::mem::swap(&mut f, &mut f_next);
        }
    }

    let mut coupling = vec![0.0; p * p];
    for i in 0..p {
        for (j, &q) in active.iter().enumerate() {
            coupling[i * p + q] = ((f[i] + g[j] - cost[i * n + j]) / lambda).exp();
        }
    }
    Ok(TransportPlan::from_coupling(
        p,
        coupling,
        problem.cost_matrix(),
        SolverKind::Entropic,
        lambda,
    ))
}

/// Set `g` to the exact column potentials for `f`, fill the coupling and
/// return the largest row-sum violation.
fn fit_columns(
    cost: &[f64],
    cost_t: &[f64],
    log_b: &[f64],
    eps: f64,
    f: &[f64],
    g: &mut [f64],
    rho: &mut [f64],
    rows: &mut [f64],
) -> f64 {
    let (p, n) = (f.len(), g.len());
    for j in 0..n {
        let col = &cost_t[j * p..(j + 1) * p];
        g[j] = eps * log_b[j] - eps * log_sum_exp(f.iter().zip(col).map(|(fi, c)| (fi - c) / eps));
    }
    let mut err: f64 = 0.0;
    for i in 0..p {
        let mut s = 0.0;
        for j in 0..n {
            let v = ((f[i] + g[j] - cost[i * n + j]) / eps).exp();
            rho[i * n + j] = v;
            s += v;
        }
        rows[i] = s;
        err = err.max((s - 1.0).abs());
    }
    err
}

/// Damped Newton iteration on the row potentials with columns kept exact.
/// Returns the final violation, or `None` if no step made progress.
fn newton_polish(
    cost: &[f64],
    cost_t: &[f64],
    log_b: &[f64],
    eps: f64,
    tol: f64,
    f: &mut Vec<f64>,
    g: &mut Vec<f64>,
) -> Option<f64> {
    use nalgebra::{DMatrix, DVector};
    let (p, n) = (f.len(), g.len());
    let col_mass: Vec<f64> = log_b.iter().map(|l| l.exp()).collect();
    let mut rho = vec![0.0; p * n];
    let mut rows = vec![0.0; p];
    let mut err = fit_columns(cost, cost_t, log_b, eps, f, g, &mut rho, &mut rows);
    let mut trial_f = f.clone();
    let mut trial_g = g.clone();
    let mut trial_rho = rho.clone();
    let mut trial_rows = rows.clone();
    let mut progressed = false;
    for _ in 0..NEWTON_STEPS {
        if err <= tol {
            break;
        }
        // eps * d(rows)/df = diag(rows) - rho diag(1/b) rho^T, which has the
        // constant vector in its kernel; the rank-one term pins the mean shift.
        let scaled = DMatrix::from_fn(p, n, |i, j| rho[i * n + j] / col_mass[j].sqrt());
        let mut jac = -(&scaled * scaled.transpose());
        jac.add_scalar_mut(1.0 / p as f64);
        for i in 0..p {
            // Residual-sized shift keeps weakly coupled blocks solvable.
            jac[(i, i)] += rows[i] + err;
        }
        let rhs = DVector::from_iterator(p, rows.iter().map(|r| eps * (1.0 - r)));
        let step = match jac.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => jac.lu().solve(&rhs)?,
        };
        // Armijo search on the concave dual, whose gradient is `1 - rows`.
        let slope: f64 = rows
            .iter()
            .zip(step.iter())
            .map(|(r, d)| (1.0 - r) * d)
            .sum();
        let value = dual(f, g, &col_mass);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..p {
                trial_f[i] = f[i] + t * step[i];
            }
            let e = fit_columns(
                cost,
                cost_t,
                log_b,
                eps,
                &trial_f,
                &mut trial_g,
                &mut trial_rho,
                &mut trial_rows,
            );
            if dual(&trial_f, &trial_g, &col_mass) >= value + 1e-4 * t * slope {
                err = e;
                std::mem::swap(f, &mut trial_f);
                std::mem::swap(g, &mut trial_g);
                std::mem::swap(&mut rho, &mut trial_rho);
                std::mem::swap(&mut rows, &mut trial_rows);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        progressed = true;
    }
    progressed.then_some(err)
}

/// Dual objective with exact column potentials, up to a constant.
fn dual(f: &[f64], g: &[f64], col_mass: &[f64]) -> f64 {
    f.iter().sum::<f64>() + g.iter().zip(col_mass).map(|(g, b)| g * b).sum::<f64>()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{solve_exact, validate_plan};
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn instance(p: usize, seed: u64) -> TransportProblem {
        let mut rng = stream(seed, Stream::Test, 2, p as u64, 0);
        let w: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = w.iter().sum();
        let cost = (0..p * p).map(|_| rng.random::<f64>()).collect();
        TransportProblem::new(w.into_iter().map(|x| x / s).collect(), cost).unwrap()
    }

    #[test]
    fn converges_to_tolerance() {
        let problem = instance(20, 1);
        for lambda in [1e-1, 1e-2, 1e-3] {
            let plan = solve_entropic(&problem, lambda, SinkhornOptions::default()).unwrap();
            assert!(validate_plan(&plan, problem.weights()).max() <= 1e-9);
        }
    }

    #[test]
    fn large_regulariser_gives_product_plan() {
        let problem = instance(10, 2);
        let lambda = 1e3 * problem.max_cost();
        let plan = solve_entropic(&problem, lambda, SinkhornOptions::default()).unwrap();
        for p in 0..10 {
            for q in 0..10 {
                assert!((plan.get(p, q) - problem.weights()[q]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn transport_cost_decreases_toward_exact() {
        for seed in 0..5 {
            let problem = instance(15, seed);
            let exact = solve_exact(&problem).unwrap().objective;
            let costs: Vec<f64> = [1e-1, 1e-2, 1e-3]
                .iter()
                .map(|&l| {
                    solve_entropic(&problem, l, SinkhornOptions::default())
                        .unwrap()
                        .objective
                })
                .collect();
            assert!(costs[0] >= costs[1] && costs[1] >= costs[2] && costs[2] >= exact - 1e-9);
            assert!(costs[2] <= 1.05 * exact);
        }
    }

    #[test]
    fn diagonally_dominant_for_zero_diagonal() {
        let p = 8;
        let mut rng = stream(3, Stream::Test, 0, 0, 0);
        let mut cost: Vec<f64> = (0..p * p).map(|_| 0.2 + rng.random::<f64>()).collect();
        (0..p).for_each(|i| cost[i * p + i] = 0.0);
        let problem = TransportProblem::uniform(cost).unwrap();
        let plan = solve_entropic(&problem, 1e-2, SinkhornOptions::default()).unwrap();
        for i in 0..p {
            let off: f64 = (0..p).filter(|&j| j != i).map(|j| plan.get(i, j)).sum();
            assert!(plan.get(i, i) > off);
            assert!((0..p).all(|j| plan.get(i, j) > 0.0));
        }
    }

    #[test]
    fn zero_weight_columns_are_reinstated() {
        let problem = TransportProblem::new(
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0],
        )
        .unwrap();
        let plan = solve_entropic(&problem, 0.1, SinkhornOptions::default()).unwrap();
        assert!((0..3).all(|p| plan.get(p, 1) == 0.0));
        assert!(validate_plan(&plan, problem.weights()).max() <= 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let problem = instance(30, 4);
        let opts = SinkhornOptions {
            tol: 1e-14,
            max_iter: 3,
            anneal: false,
            newton: false,
        };
        match solve_entropic(&problem, 1e-3, opts) {
            Err(Error::SinkhornNotConverged {
                iterations,
                marginal_error,
            }) => {
                assert_eq!(iterations, 3);
                assert!(marginal_error > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(solve_entropic(&problem, 0.0, SinkhornOptions::default()).is_err());
    }

    #[test]
    fn newton_polish_matches_plain_sweeps() {
        let problem = instance(12, 6);
        let plain = SinkhornOptions {
            newton: false,
            max_iter: 1_000_000,
            ..Default::default()
        };
        let a = solve_entropic(&problem, 1e-2, SinkhornOptions::default()).unwrap();
        let b = solve_entropic(&problem, 1e-2, plain).unwrap();
        for (x, y) in a.coupling().iter().zip(b.coupling()) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn annealing_does_not_change_the_answer() {
        let problem = instance(12, 5);
        let a = solve_entropic(
            &problem,
            0.05,
            SinkhornOptions {
                anneal: true,
                ..Default::default()
            },
        )
        .unwrap();
        let b = solve_entropic(
            &problem,
            0.05,
            SinkhornOptions {
                anneal: false,
                ..Default::default()
            },
        )
        .unwrap();
        for (x, y) in a.coupling().iter().zip(b.coupling()) {
            assert!((x - y).abs() < 1e-7);
        }
    }
}
