//! Acceptance suite: one check per acceptance criterion, each printing a
//! single PASS/FAIL line with the measured quantities.
//!
//! Runs as a plain binary (`harness = false`) so criteria execute in order
//! and their lines are never captured. Pass criterion ids (`1`, `10b`, ...)
//! as arguments to run a subset:
//!
//! ```text
//! cargo test --release --test acceptance -- 3 10b
//! ```
//!
//! The process exits non-zero when any selected criterion fails.

use nalgebra::{DMatrix, DVector};
use otlpf::filters::{
    compute_local_weights, etkf_assimilate, kf_assimilate, FilterKind, Granularity,
    LinearGaussianSystem, RunOptions, Sletpf, TransportSolver,
};
use otlpf::harness::{
    build_ground_truth, build_model, reference_ground_truth, simulate_truth, Experiment,
    ExperimentConfig, FilterConfig, Grid, GridResult, Metric, ModelConfig, ModelKind, OtChoice,
    Truth,
};
use otlpf::metrics::{chi_square_uniform, ensemble_smoothness, rank_histogram, rmse, GroundTruth};
use otlpf::models::{
    predict_ensemble_observations, sample_initial_ensemble, Ensemble, KsParams, StModel, StParams,
};
use otlpf::ot::{solve_entropic, solve_exact, SinkhornOptions, TransportProblem};
use otlpf::rng::{standard_normal, stream, Stream};
use otlpf::spatial::{
    build_equal_partition, build_pou, periodic_distance, Localisation, PeriodicMesh,
};
use rand::Rng;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Master seed shared by every simulated experiment in this suite.
const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(line: &str) {
    // Direct handle writes bypass test output capture.
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn main() {
    let selected: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let criteria: [(&str, &str, fn() -> Outcome); 13] = [
        ("1", "exact transport matches brute force", ot_exactness),
        ("2", "entropic transport contract", sinkhorn_contract),
        (
            "3",
            "ETKF agrees with the Kalman filter",
            etkf_matches_kalman,
        ),
        (
            "4",
            "patch filter reduction identities",
            reduction_identities,
        ),
        (
            "5",
            "node-wise weighted mean preservation",
            mean_preservation,
        ),
        (
            "6",
            "LETKF error magnitude on the linear model",
            letkf_linear_magnitude,
        ),
        (
            "7",
            "patch filter beats LETKF std error on the transformed model",
            non_gaussian_advantage,
        ),
        ("8", "fewer patches cut assimilation time", runtime_scaling),
        (
            "9",
            "smooth partition improves smoothness error",
            smoothness_benefit,
        ),
        ("10a", "KS trajectories stay bounded", ks_bounded),
        (
            "10b",
            "patch filter tracks a large bootstrap reference on reduced KS",
            ks_reference,
        ),
        (
            "10c",
            "patch filter rank histogram flatter than LETKF on tanh-KS",
            ks_rank_histograms,
        ),
        ("11", "results independent of thread count", determinism),
    ];
    let mut failures = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        failures += usize::from(!outcome.pass);
        report(&format!(
            "criterion {id:>3} {verdict}: {name}: {} [{:.1}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        ));
    }
    if failures > 0 {
        report(&format!("{failures} acceptance criteria failed"));
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn random_costs(p: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..p * p).map(|_| rng.random::<f64>()).collect()
}

/// Cheapest permutation by recursive enumeration.
fn permutation_minimum(cost: &[f64], p: usize) -> f64 {
    fn go(cost: &[f64], p: usize, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == p {
            *best = best.min(acc);
            return;
        }
        for q in 0..p {
            if !used[q] {
                used[q] = true;
                go(cost, p, row + 1, used, acc + cost[row * p + q], best);
                used[q] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, p, 0, &mut vec![false; p], 0.0, &mut best);
    best
}

/// Largest violation of unit rows and `P * w_q` columns.
fn marginal_error(coupling: &[f64], weights: &[f64]) -> f64 {
    let p = weights.len();
    let mut worst = 0.0f64;
    for i in 0..p {
        let row: f64 = coupling[i * p..(i + 1) * p].iter().sum();
        worst = worst.max((row - 1.0).abs());
    }
    for (q, w) in weights.iter().enumerate() {
        let col: f64 = (0..p).map(|i| coupling[i * p + q]).sum();
        worst = worst.max((col - p as f64 * w).abs());
    }
    worst
}

fn random_ensemble(p: usize, m: usize, seed: u64) -> Ensemble {
    let mut rng = stream(seed, Stream::Test, 7, 0, 0);
    Ensemble::from_vec(
        p,
        m,
        (0..p * m).map(|_| standard_normal(&mut rng)).collect(),
    )
    .unwrap()
}

fn random_loglik(p: usize, l: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Test, 8, 0, 0);
    (0..p * l).map(|_| -3.0 * rng.random::<f64>()).collect()
}

fn normalised(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn st_config(kind: ModelKind, filter: FilterKind, times: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(kind, filter);
    cfg.model.st.times = times;
    cfg.run.seed = SEED;
    cfg
}

fn sletpf(patches: usize, kernel_width: f64, radius: f64) -> FilterConfig {
    FilterConfig {
        kind: FilterKind::Sletpf,
        patches,
        kernel_width,
        radius,
        ..FilterConfig::default()
    }
}

/// Admissible radii of a patch filter on `exp` out of `candidates`.
fn admissible(exp: &Experiment, base: &FilterConfig, candidates: &[f64]) -> Vec<f64> {
    let (lo, hi) = exp.config.admissible_window();
    candidates
        .iter()
        .copied()
        .filter(|&r| {
            let n = exp
                .median_effective_observations(&FilterConfig {
                    radius: r,
                    ..base.clone()
                })
                .unwrap();
            (lo..=hi).contains(&n)
        })
        .collect()
}

fn sweep(exp: &Experiment, filter: FilterConfig, radii: Vec<f64>, repeats: u32) -> GridResult {
    let mut cfg = exp.config.clone();
    cfg.filter = filter.clone();
    cfg.run.repeats = repeats;
    let exp =
        Experiment::with_ground_truth(cfg, exp.truth.clone(), exp.ground_truth.clone()).unwrap();
    let grid = Grid {
        radii,
        patches: vec![filter.patches],
        kernel_widths: vec![filter.kernel_width],
        filter_admissible: false,
    };
    let result = exp.grid_search(&grid).unwrap();
    assert_eq!(
        result.failures(),
        0,
        "sweep had failed runs: {:?}",
        result.rows.iter().find(|r| r.error.is_some())
    );
    result
}

/// Pseudo ground truth equal to the hidden trajectory, so that the mean
/// metric measures the error against the truth itself.
fn truth_as_reference(truth: &Truth) -> GroundTruth {
    let smooth = truth
        .states
        .chunks_exact(truth.nodes)
        .map(|s| ensemble_smoothness(&Ensemble::from_vec(1, truth.nodes, s.to_vec()).unwrap()))
        .collect();
    GroundTruth::from_reference(
        truth.states.clone(),
        vec![0.0; truth.states.len()],
        smooth,
        1,
    )
    .unwrap()
}

// --------------------------------------------------------------- criteria

fn ot_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst_obj = 0.0f64;
    let mut worst_marg = 0.0f64;
    let mut worst_nnz_excess = i64::MIN;
    for p in 2..=6 {
        let mut rng = stream(SEED, Stream::Test, 100, p as u64, 0);
        for _ in 0..200 {
            let cost = random_costs(p, &mut rng);
            let problem = TransportProblem::uniform(cost.clone()).unwrap();
            let plan = solve_exact(&problem).unwrap();
            let best = permutation_minimum(&cost, p);
            worst_obj = worst_obj.max((plan.objective - best).abs() / best.abs().max(1e-300));
            worst_marg = worst_marg.max(marginal_error(plan.coupling(), problem.weights()));
            let nnz = plan.coupling().iter().filter(|&&v| v != 0.0).count() as i64;
            worst_nnz_excess = worst_nnz_excess.max(nnz - (2 * p as i64 - 1));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_obj <= 1e-12 && worst_marg <= 1e-12 && worst_nnz_excess <= 0 && secs < 60.0,
        format!(
            "max rel objective gap {worst_obj:.1e} (<=1e-12), max marginal error {worst_marg:.1e} (<=1e-12), \
             max nonzeros minus (2P-1) {worst_nnz_excess} (<=0), {secs:.2}s (<60s)"
        ),
    )
}

fn sinkhorn_contract() -> Outcome {
    let start = Instant::now();
    let p = 100;
    let lambdas = [1e-1, 1e-2, 1e-3];
    let mut worst_marg = 0.0f64;
    let mut monotone = true;
    let mut worst_ratio = 0.0f64;
    for inst in 0..50u64 {
        let mut rng = stream(SEED, Stream::Test, 200, inst, 0);
        // Squared distances between particles in four dimensions, as in the
        // filters, with positive random weights.
        let pts: Vec<[f64; 4]> = (0..p)
            .map(|_| std::array::from_fn(|_| standard_normal(&mut rng)))
            .collect();
        let cost: Vec<f64> = (0..p * p)
            .map(|k| {
                pts[k / p]
                    .iter()
                    .zip(&pts[k % p])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect();
        let raw: Vec<f64> = (0..p).map(|_| standard_normal(&mut rng).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let problem = TransportProblem::new(weights.clone(), cost).unwrap();
        let exact = solve_exact(&problem).unwrap().objective;
        let mut costs = Vec::new();
        for &lambda in &lambdas {
            let plan = solve_entropic(&problem, lambda, SinkhornOptions::default()).unwrap();
            worst_marg = worst_marg.max(marginal_error(plan.coupling(), &weights));
            costs.push(plan.objective);
        }
        monotone &=
            costs[0] >= costs[1] && costs[1] >= costs[2] && costs[2] >= exact * (1.0 - 1e-12);
        worst_ratio = worst_ratio.max(costs[2] / exact - 1.0);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst_marg <= 1e-9 && monotone && worst_ratio <= 0.05 && secs < 120.0,
        format!(
            "max marginal error {worst_marg:.1e} (<=1e-9), monotone towards exact: {monotone}, \
             worst lambda=1e-3 excess {:.3}% (<=5%), {secs:.1}s (<120s)",
            100.0 * worst_ratio
        ),
    )
}

fn etkf_matches_kalman() -> Outcome {
    let params = StParams {
        nodes: 8,
        observations: 4,
        times: 1,
        ..StParams::default()
    };
    let model = StModel::new(params).unwrap();
    let system = LinearGaussianSystem::from_st(&model).unwrap();
    let cfg = ModelConfig {
        st: params,
        ..ModelConfig::new(ModelKind::StLinear)
    };
    let (mut mean_err, mut cov_err) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let truth = simulate_truth(&cfg, 100 + seed).unwrap();
        let y = &truth.observations;
        let exact = kf_assimilate(
            &system.initial,
            &system.observation,
            &system.observation_noise,
            &DVector::from_column_slice(y),
        )
        .unwrap();
        let ens = sample_initial_ensemble(&model, 2000, 100 + seed, 0).unwrap();
        let predicted = predict_ensemble_observations(&model, &ens).unwrap();
        let post = etkf_assimilate(&ens, &predicted, &system.observation_noise, y, 1.0).unwrap();
        let p = post.particles();
        let mean = DVector::from_vec(post.mean());
        let mut cov = DMatrix::zeros(8, 8);
        for row in post.rows() {
            let d = DVector::from_column_slice(row) - &mean;
            cov += &d * d.transpose();
        }
        cov /= (p - 1) as f64;
        mean_err += (&mean - &exact.mean).amax() / exact.mean.amax();
        cov_err += (&cov - &exact.cov).norm() / exact.cov.norm();
    }
    mean_err /= seeds as f64;
    cov_err /= seeds as f64;
    Outcome::new(
        mean_err <= 0.05 && cov_err <= 0.10,
        format!(
            "seed-averaged relative mean error {:.2}% (<=5%), covariance error {:.2}% (<=10%)",
            100.0 * mean_err,
            100.0 * cov_err
        ),
    )
}

fn reduction_identities() -> Outcome {
    let (p, m, l) = (10, 32, 4);
    let mesh = PeriodicMesh::new(m).unwrap();
    let obs: Vec<f64> = (0..l).map(|j| mesh.position(8 * j + 3)).collect();
    let loc = Localisation::gaspari_cohn(0.2).unwrap();
    let mut worst_node = 0.0f64;
    let mut worst_global = 0.0f64;
    for seed in 0..10 {
        let ens = random_ensemble(p, m, seed);
        let ll = random_loglik(p, l, seed);

        // B = M hard partition, every node in the cost set, against a
        // per-node reference assembled here.
        let all: Vec<usize> = (0..m).collect();
        let pou = build_pou(
            build_equal_partition(&mesh, m).unwrap(),
            &mesh,
            1.0 / m as f64,
        )
        .unwrap()
        .with_subsample(all)
        .unwrap();
        let out = Sletpf::new(pou, &obs, &loc, TransportSolver::Exact)
            .assimilate(&ens, &ll)
            .unwrap();
        let mut reference = vec![0.0; p * m];
        for n in 0..m {
            let log_w: Vec<f64> = (0..p)
                .map(|i| {
                    (0..l)
                        .map(|j| {
                            loc.weight(periodic_distance(mesh.position(n), obs[j])) * ll[i * l + j]
                        })
                        .sum()
                })
                .collect();
            let col = ens.column(n);
            let cost: Vec<f64> = (0..p * p)
                .map(|k| (col[k / p] - col[k % p]).powi(2))
                .collect();
            let plan =
                solve_exact(&TransportProblem::new(normalised(&log_w), cost).unwrap()).unwrap();
            for i in 0..p {
                reference[i * m + n] = (0..p).map(|q| plan.get(i, q) * col[q]).sum();
            }
        }
        worst_node = worst_node.max(max_abs_diff(out.ensemble.as_slice(), &reference));

        // B = 1 with a taper covering the whole domain: global weights and
        // costs over the subsampled nodes.
        let pou = build_pou(
            build_equal_partition(&mesh, 1).unwrap(),
            &mesh,
            1.0 / m as f64,
        )
        .unwrap();
        let wide = Localisation::new(otlpf::spatial::LocalisationKind::Uniform, 1.0).unwrap();
        let filter = Sletpf::new(pou, &obs, &wide, TransportSolver::Exact);
        let out = filter.assimilate(&ens, &ll).unwrap();
        let global = normalised(
            &(0..p)
                .map(|i| ll[i * l..(i + 1) * l].iter().sum())
                .collect::<Vec<f64>>(),
        );
        let nodes = filter.pou().subsample().to_vec();
        let cost: Vec<f64> = (0..p * p)
            .map(|k| {
                nodes
                    .iter()
                    .map(|&n| (ens.get(k / p, n) - ens.get(k % p, n)).powi(2))
                    .sum()
            })
            .collect();
        let plan = solve_exact(&TransportProblem::new(global, cost).unwrap()).unwrap();
        let mut reference = vec![0.0; p * m];
        for i in 0..p {
            for n in 0..m {
                reference[i * m + n] = (0..p).map(|q| plan.get(i, q) * ens.get(q, n)).sum();
            }
        }
        worst_global = worst_global.max(max_abs_diff(out.ensemble.as_slice(), &reference));
    }
    Outcome::new(
        worst_node <= 1e-12 && worst_global <= 1e-12,
        format!("B=M vs per-node reference {worst_node:.1e} (<=1e-12), B=1 vs global ETPF {worst_global:.1e} (<=1e-12)"),
    )
}

fn mean_preservation() -> Outcome {
    let mut worst = 0.0f64;
    for cfg in 0..100u64 {
        let mut rng = stream(SEED, Stream::Test, 300, cfg, 0);
        let m = [16usize, 32, 64][rng.random_range(0..3)];
        let divisors: Vec<usize> = (0..=m.trailing_zeros())
            .map(|k| 1usize << k)
            .filter(|&b| b <= m)
            .collect();
        let b = divisors[rng.random_range(0..divisors.len())];
        let w = rng.random_range(1..=4) as f64 / m as f64;
        let p = rng.random_range(3..12);
        let l = [2usize, 4, 8][rng.random_range(0..3)];
        let r = rng.random_range(0.02..0.4);
        let mesh = PeriodicMesh::new(m).unwrap();
        let obs: Vec<f64> = (0..l)
            .map(|j| mesh.position((2 * j + 1) * m / (2 * l) - 1))
            .collect();
        let pou = build_pou(build_equal_partition(&mesh, b).unwrap(), &mesh, w).unwrap();
        let filter = Sletpf::new(
            pou,
            &obs,
            &Localisation::gaspari_cohn(r).unwrap(),
            TransportSolver::Exact,
        );
        let ens = random_ensemble(p, m, 1000 + cfg);
        let ll = random_loglik(p, l, 1000 + cfg);
        let out = filter.assimilate(&ens, &ll).unwrap();
        // Patch weights recomputed from the patch-to-observation tapers.
        let tapers = &filter.effective_observations().weights;
        let pw = compute_local_weights(&ll, p, Granularity::Local(tapers)).unwrap();
        let mean = out.ensemble.mean();
        for n in 0..m {
            let target: f64 = (0..b)
                .map(|k| {
                    filter.pou().bump(k, n)
                        * (0..p).map(|q| pw.unit(k)[q] * ens.get(q, n)).sum::<f64>()
                })
                .sum();
            worst = worst.max((mean[n] - target).abs());
        }
        // The global filter is the one-patch case of the same identity.
        let gw = compute_local_weights(&ll, p, Granularity::Global).unwrap();
        let global =
            otlpf::filters::etpf_assimilate(&ens, gw.unit(0), None, TransportSolver::Exact)
                .unwrap();
        for (n, v) in global.mean().iter().enumerate() {
            let target: f64 = (0..p).map(|q| gw.unit(0)[q] * ens.get(q, n)).sum();
            worst = worst.max((v - target).abs());
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!("max node-wise mean defect {worst:.1e} over 100 configurations (<=1e-10)"),
    )
}

fn letkf_linear_magnitude() -> Outcome {
    let cfg = st_config(ModelKind::StLinear, FilterKind::Letkf, 200);
    let exp = Experiment::prepare(cfg).unwrap();
    let base = FilterConfig {
        kind: FilterKind::Letkf,
        ..FilterConfig::default()
    };
    let run = |r: f64| {
        let start = Instant::now();
        let res = exp
            .run_once(
                &FilterConfig {
                    radius: r,
                    ..base.clone()
                },
                0,
                RunOptions::default(),
            )
            .unwrap();
        (res.row.metrics.unwrap(), start.elapsed().as_secs_f64())
    };
    let (at_mean, secs_mean) = run(0.030);
    let (at_std, secs_std) = run(0.034);
    let pass = (0.030..=0.060).contains(&at_mean.rmse_mean)
        && (0.010..=0.020).contains(&at_std.rmse_std)
        && secs_mean.max(secs_std) <= 600.0;
    // Context for the verdict: where this harness puts the optimum.
    let scan = sweep(&exp, base, exp.config.radius_grid(), 1);
    let (best_mean, sm) = scan.best(Metric::RmseMean).unwrap();
    let (best_std, ss) = scan.best(Metric::RmseStd).unwrap();
    Outcome::new(
        pass,
        format!(
            "r=0.030 RMSE(mean) {:.4} (in [0.030,0.060]), r=0.034 RMSE(std) {:.4} (in [0.010,0.020]), \
             run time {:.1}s (<=600s); grid optimum RMSE(mean) {:.4} at r={:.3}, RMSE(std) {:.4} at r={:.3}",
            at_mean.rmse_mean,
            at_std.rmse_std,
            secs_mean.max(secs_std),
            sm.median,
            best_mean.radius,
            ss.median,
            best_std.radius
        ),
    )
}

fn non_gaussian_advantage() -> Outcome {
    let start = Instant::now();
    let cfg = st_config(ModelKind::StTransformed, FilterKind::Sletpf, 200);
    let exp = Experiment::prepare(cfg).unwrap();
    let base = sletpf(128, 1.0 / 256.0, 0.01);
    let sletpf_grid: Vec<f64> = (1..=30).map(|i| i as f64 / 1000.0).collect();
    let radii = admissible(&exp, &base, &sletpf_grid);
    let patch = sweep(&exp, base, radii.clone(), 2);
    let letkf_base = FilterConfig {
        kind: FilterKind::Letkf,
        ..FilterConfig::default()
    };
    let letkf_grid: Vec<f64> = (0..=75).map(|i| (10 + 2 * i) as f64 / 1000.0).collect();
    let letkf = sweep(&exp, letkf_base, letkf_grid, 2);
    let (pc, ps) = patch.best(Metric::RmseStd).unwrap();
    let (lc, ls) = letkf.best(Metric::RmseStd).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        ps.median < ls.median && secs <= 7200.0,
        format!(
            "patch filter best RMSE(std) {:.4} at r={:.3} ({} admissible radii) vs LETKF best {:.4} at r={:.3}, \
             {secs:.0}s (<=7200s)",
            ps.median,
            pc.radius,
            radii.len(),
            ls.median,
            lc.radius
        ),
    )
}

fn runtime_scaling() -> Outcome {
    let cfg = st_config(ModelKind::StTransformed, FilterKind::Sletpf, 50);
    let exp = Experiment::prepare(cfg).unwrap();
    let candidates: Vec<f64> = (0..7).map(|i| (6 + 4 * i) as f64 / 1000.0).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let mut summary = Vec::new();
    for (b, w) in [(512usize, 1.0 / 512.0), (64, 1.0 / 128.0)] {
        let base = sletpf(b, w, 0.01);
        let radii = admissible(&exp, &base, &candidates);
        let (best, stats) = pool.install(|| {
            let scan = sweep(&exp, base.clone(), radii.clone(), 1);
            let best = scan.best(Metric::RmseMean).unwrap().0.clone();
            let timed = sweep(&exp, best.clone(), vec![best.radius], 3);
            let s = timed.spread(&best, Metric::AssimSeconds).unwrap();
            let e = timed.spread(&best, Metric::RmseMean).unwrap();
            (best, (s.median, e.median))
        });
        summary.push((b, best.radius, stats.0, stats.1));
    }
    let (_, r512, t512, e512) = summary[0];
    let (_, r64, t64, e64) = summary[1];
    let ratio = t64 / t512;
    let rel = (e64 - e512).abs() / e512;
    Outcome::new(
        ratio <= 0.4 && rel <= 0.15,
        format!(
            "median assimilation time B=64 {t64:.2}s (r={r64:.3}) vs B=512 {t512:.2}s (r={r512:.3}), ratio {ratio:.3} \
             (<=0.4); RMSE(mean) {e64:.4} vs {e512:.4}, difference {:.1}% (<=15%)",
            100.0 * rel
        ),
    )
}

fn smoothness_benefit() -> Outcome {
    let cfg = st_config(ModelKind::StLinear, FilterKind::Sletpf, 100);
    let exp = Experiment::prepare(cfg).unwrap();
    let candidates: Vec<f64> = (1..=15).map(|i| (2 * i) as f64 / 1000.0).collect();
    let mut best = Vec::new();
    for w in [1.0 / 128.0, 1.0 / 512.0] {
        let base = sletpf(128, w, 0.01);
        let radii = admissible(&exp, &base, &candidates);
        let scan = sweep(&exp, base, radii, 1);
        let (c, s) = scan.best(Metric::RmseSmoothness).unwrap();
        best.push((c.radius, s.median));
    }
    Outcome::new(
        best[0].1 < best[1].1,
        format!(
            "B=128 best RMSE(smoothness) w=1/128 {:.4} (r={:.3}) vs w=1/512 {:.4} (r={:.3})",
            best[0].1, best[0].0, best[1].1, best[1].0
        ),
    )
}

fn ks_bounded() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [ModelKind::KsLinear, ModelKind::KsTanh] {
        let mut cfg = ModelConfig::new(kind);
        cfg.ks = KsParams::default();
        let truth = simulate_truth(&cfg, SEED).unwrap();
        worst = worst.max(truth.states.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    let p = KsParams::default();
    Outcome::new(
        worst < 1e3,
        format!(
            "max |z| over {} integrator steps: {worst:.3} (<1e3)",
            p.times * p.steps_per_observation
        ),
    )
}

fn ks_reference() -> Outcome {
    let mut cfg = ExperimentConfig::new(ModelKind::KsTanh, FilterKind::Sletpf);
    cfg.model.ks = KsParams::reduced(32, 4, 20);
    cfg.run.seed = SEED;
    let truth = simulate_truth(&cfg.model, SEED).unwrap();
    let model = build_model(&cfg.model).unwrap();
    let reference =
        reference_ground_truth(model.as_ref(), &truth.observations, 100_000, SEED).unwrap();
    let base = sletpf(4, 1.0 / 16.0, 0.1);
    let exp = Experiment::with_ground_truth(cfg, truth, reference).unwrap();
    let candidates: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
    let radius = admissible(&exp, &base, &candidates)[0];
    let filter = FilterConfig { radius, ..base };
    let res = exp.run_once(&filter, 0, RunOptions::default()).unwrap();
    let m = res.row.metrics.unwrap();
    let bound = 2.0 * exp.config.model.ks.obs_noise_std;
    Outcome::new(
        m.rmse_mean <= bound,
        format!(
            "RMSE(mean) vs P=1e5 bootstrap reference {:.4} (<= {bound}) at r={radius:.2}, median n {:.2}",
            m.rmse_mean, m.median_n_eff
        ),
    )
}

fn ks_rank_histograms() -> Outcome {
    let mut cfg = ExperimentConfig::new(ModelKind::KsTanh, FilterKind::Sletpf);
    cfg.model.ks = KsParams::default();
    cfg.run.seed = SEED;
    let truth = simulate_truth(&cfg.model, SEED).unwrap();
    let reference = truth_as_reference(&truth);
    let exp = Experiment::with_ground_truth(cfg, truth, reference).unwrap();

    let chi = |best: &FilterConfig| {
        let res = exp
            .run_once(
                best,
                0,
                RunOptions {
                    record_ensembles: true,
                },
            )
            .unwrap();
        let ens = res.output.ensembles.unwrap();
        let hist =
            rank_histogram(&ens, &exp.truth.states, best.particles, exp.truth.nodes).unwrap();
        let err = rmse(&res.output.means, &exp.truth.states).unwrap();
        let total: u64 = hist.counts.iter().sum();
        let extremes = hist.counts[0] + hist.counts[hist.counts.len() - 1];
        (
            chi_square_uniform(&hist),
            err,
            extremes as f64 / total as f64,
        )
    };

    let base = sletpf(64, 1.0 / 128.0, 0.01);
    let candidates: Vec<f64> = (1..=12).map(|i| i as f64 / 100.0).collect();
    let radii = admissible(&exp, &base, &candidates);
    let patch = sweep(&exp, base, radii.clone(), 1);
    let patch_best = patch.best(Metric::RmseMean).unwrap().0.clone();
    let letkf_base = FilterConfig {
        kind: FilterKind::Letkf,
        ..FilterConfig::default()
    };
    let letkf_grid: Vec<f64> = (1..=10).map(|i| (2 * i) as f64 / 100.0).collect();
    let letkf = sweep(&exp, letkf_base, letkf_grid, 1);
    let letkf_best = letkf.best(Metric::RmseMean).unwrap().0.clone();

    let (chi_patch, err_patch, ext_patch) = chi(&patch_best);
    let (chi_letkf, err_letkf, ext_letkf) = chi(&letkf_best);
    Outcome::new(
        chi_patch < chi_letkf,
        format!(
            "chi-square vs uniform: patch filter {chi_patch:.1} (r={:.2}, truth RMSE {err_patch:.3}, extreme-rank \
             mass {ext_patch:.3}) vs LETKF {chi_letkf:.1} (r={:.2}, truth RMSE {err_letkf:.3}, extreme-rank mass \
             {ext_letkf:.3}); uniform extreme-rank mass {:.3}",
            patch_best.radius,
            letkf_best.radius,
            2.0 / (patch_best.particles + 1) as f64
        ),
    )
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::new(ModelKind::StTransformed, FilterKind::Sletpf);
    cfg.model.st = StParams {
        nodes: 64,
        observations: 8,
        times: 10,
        ..StParams::default()
    };
    cfg.run.seed = SEED;
    cfg.run.ground_truth_samples = 2000;
    let exp = Experiment::prepare(cfg.clone()).unwrap();
    let mut ks_cfg = ExperimentConfig::new(ModelKind::KsTanh, FilterKind::Sletpf);
    ks_cfg.model.ks = KsParams::reduced(32, 4, 8);
    ks_cfg.run.seed = SEED;
    ks_cfg.run.reference_particles = 2000;
    let ks = Experiment::prepare(ks_cfg).unwrap();

    let filters = [
        sletpf(16, 1.0 / 32.0, 0.1),
        FilterConfig {
            ot: OtChoice::Entropic,
            ..sletpf(8, 1.0 / 32.0, 0.1)
        },
        FilterConfig {
            kind: FilterKind::Letkf,
            radius: 0.1,
            ..FilterConfig::default()
        },
        FilterConfig {
            kind: FilterKind::BootstrapPf,
            ..FilterConfig::default()
        },
        FilterConfig {
            kind: FilterKind::Etpf,
            particles: 30,
            ..FilterConfig::default()
        },
    ];
    let fingerprint = |threads: usize| -> Vec<u64> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let mut bits = Vec::new();
            for e in [&exp, &ks] {
                let gt = build_ground_truth(&e.config, &e.truth).unwrap();
                bits.extend(gt.means.iter().chain(&gt.stds).map(|v| v.to_bits()));
                for f in &filters {
                    let r = e.run_once(f, 1, RunOptions::default()).unwrap();
                    let m = r.row.metrics.unwrap();
                    bits.extend(
                        [m.rmse_mean, m.rmse_std, m.rmse_smoothness, m.median_n_eff]
                            .map(f64::to_bits),
                    );
                    bits.extend(r.output.means.iter().map(|v| v.to_bits()));
                }
            }
            bits
        })
    };
    let one = fingerprint(1);
    let differing: Vec<usize> = [2usize, 4]
        .into_iter()
        .filter(|&t| fingerprint(t) != one)
        .collect();
    Outcome::new(
        differing.is_empty(),
        format!(
            "{} values compared bitwise across 1, 2 and 4 threads; mismatching thread counts: {differing:?}",
            one.len()
        ),
    )
}
