use super::stats::smoothness_coefficient;
use crate::error::{Error, Result};
use crate::filters::{GaussianBelief, KalmanTrajectory, LinearGaussianSystem};
use crate::models::{StModel, StateTransform};
use crate::rng::{standard_normal, stream, Stream, StreamRng};
use nalgebra::DMatrix;

/// Samples drawn per matrix product when pushing a belief forward.
const BATCH: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GroundTruthSource {
    KalmanExact,
    PushforwardMonteCarlo { samples: usize },
    ReferenceEnsemble { particles: usize },
}

/// Reference filtering means, standard deviations and smoothness
/// coefficients, `T x M` row-major.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub times: usize,
    pub nodes: usize,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub smoothness: Vec<f64>,
    pub source: GroundTruthSource,
}

impl GroundTruth {
    pub fn from_kalman(k: KalmanTrajectory) -> Self {
        let times = k.smoothness.len();
        let nodes = k.means.len() / times.max(1);
        Self {
            times,
            nodes,
            means: k.means,
            stds: k.stds,
            smoothness: k.smoothness,
            source: GroundTruthSource::KalmanExact,
        }
    }

    pub fn from_reference(
        means: Vec<f64>,
        stds: Vec<f64>,
        smoothness: Vec<f64>,
        particles: usize,
    ) -> Result<Self> {
        let times = smoothness.len();
        if times == 0 || means.len() % times != 0 || stds.len() != means.len() {
            return Err(Error::invalid(
                "reference statistics have inconsistent shapes",
            ));
        }
        Ok(Self {
            times,
            nodes: means.len() / times,
            means,
            stds,
            smoothness,
            source: GroundTruthSource::ReferenceEnsemble { particles },
        })
    }
}

/// Lower Cholesky factor, adding diagonal jitter scaled to the largest
/// variance until the factorisation succeeds.
fn robust_cholesky(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = cov.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut c = cov.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += jitter;
        }
        if let Some(ch) = c.cholesky() {
            return Ok(ch.l());
        }
        jitter = if jitter == 0.0 {
            1e-14 * scale
        } else {
            jitter * 10.0
        };
    }
    Err(Error::LinearAlgebra(
        "covariance factorisation failed even with jitter".into(),
    ))
}

/// Mean, standard deviation and smoothness coefficient of `T(X)` for
/// `X ~ belief`, estimated from `n` samples.
pub fn pushforward_belief(
    belief: &GaussianBelief,
    transform: StateTransform,
    n: usize,
    rng: &mut StreamRng,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let m = belief.dim();
    let l = robust_cholesky(&belief.cov)?;
    let mut sum = vec![0.0; m];
    let mut sum2 = vec![0.0; m];
    let mut smooth = 0.0;
    let mut field = vec![0.0; m];
    let mut done = 0;
    while done < n {
        let b = BATCH.min(n - done);
        let z = DMatrix::from_fn(m, b, |_, _| standard_normal(rng));
        let x = &l * z;
        for s in 0..b {
            for i in 0..m {
                let v = transform.apply(belief.mean[i] + x[(i, s)]);
                field[i] = v;
                sum[i] += v;
                sum2[i] += v * v;
            }
            smooth += smoothness_coefficient(&field);
        }
        done += b;
    }
    let nf = n as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
    let std = sum2
        .iter()
        .zip(&mean)
        .map(|(s2, mu)| (s2 / nf - mu * mu).max(0.0).sqrt())
        .collect();
    Ok((mean, std, smooth / nf))
}

/// Ground truth for the transformed linear-Gaussian model: exact Kalman
/// filtering of the base model on the mapped-back observations, with each
/// filtering belief pushed through the transform by Monte Carlo.
pub fn pushforward_ground_truth(
    model: &StModel,
    observations: &[f64],
    transform: StateTransform,
    samples: usize,
    seed: u64,
) -> Result<GroundTruth> {
    let system = LinearGaussianSystem::from_st(model)?;
    let mut means = Vec::new();
    let mut stds = Vec::new();
    let mut smoothness = Vec::new();
    system.filter(observations, |t, belief| {
        let mut rng = stream(seed, Stream::GroundTruth, 0, t as u64, 0);
        let (mu, sd, g) = pushforward_belief(belief, transform, samples, &mut rng)?;
        means.extend(mu);
        stds.extend(sd);
        smoothness.push(g);
        Ok(())
    })?;
    let times = smoothness.len();
    Ok(GroundTruth {
        times,
        nodes: model.params().nodes,
        means,
        stds,
        smoothness,
        source: GroundTruthSource::PushforwardMonteCarlo { samples },
    })
}
