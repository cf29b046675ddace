//! Exact Kalman filtering for the linear-Gaussian test model.

use crate::error::{Error, Result};
use crate::models::{StModel, StateSpaceModel};
use nalgebra::{DMatrix, DVector};

/// Largest accepted condition number of the innovation covariance.
const MAX_CONDITION: f64 = 1e14;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::invalid(
                "covariance must be square and match the mean",
            ));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Marginal standard deviations.
    pub fn stds(&self) -> Vec<f64> {
        self.cov
            .diagonal()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }
}

pub(crate) fn symmetrise(c: &mut DMatrix<f64>) {
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
}

/// Circulant matrix with first column `row` (a symmetric covariance when
/// `row[k] == row[M - k]`).
pub fn circulant(row: &[f64]) -> DMatrix<f64> {
    let m = row.len();
    DMatrix::from_fn(m, m, |i, j| row[(i + m - j) % m])
}

/// Condition the belief on `y = H x + v`, `v ~ N(0, R)`.
pub fn kf_assimilate(
    belief: &GaussianBelief,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<GaussianBelief> {
    let (l, m) = h.shape();
    if m != belief.dim() || r.shape() != (l, l) || y.len() != l {
        return Err(Error::invalid(
            "observation operator, noise and data dimensions disagree",
        ));
    }
    if l == 0 {
        return Ok(belief.clone());
    }
    let hc = h * &belief.cov;
    let mut s = &hc * h.transpose() + r;
    symmetrise(&mut s);
    let eig = s.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v.abs()))
    });
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::LinearAlgebra(format!(
            "innovation covariance is singular (eigenvalues in [{lo:e}, {hi:e}])"
        )));
    }
    let chol = s.cholesky().ok_or_else(|| {
        Error::LinearAlgebra("innovation covariance is not positive definite".into())
    })?;
    // Gain transposed: S^-1 H C.
    let gain_t = chol.solve(&hc);
    let innovation = y - h * &belief.mean;
    let mean = &belief.mean + gain_t.transpose() * innovation;
    let mut cov = &belief.cov - hc.transpose() * gain_t;
    symmetrise(&mut cov);
    Ok(GaussianBelief { mean, cov })
}

/// Prediction and observation matrices of the linear-Gaussian model.
#[derive(Clone, Debug)]
pub struct LinearGaussianSystem {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub initial: GaussianBelief,
    pub observation: DMatrix<f64>,
    pub observation_noise: DMatrix<f64>,
}

impl LinearGaussianSystem {
    pub fn from_st(model: &StModel) -> Result<Self> {
        let m = model.node_count();
        let mut transition = DMatrix::zeros(m, m);
        let mut e = vec![0.0; m];
        for j in 0..m {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            model.propagate_mean(&mut e);
            for i in 0..m {
                transition[(i, j)] = e[i];
            }
        }
        let process_noise = circulant(&model.process_noise_covariance_row());
        let initial = GaussianBelief::new(
            DVector::zeros(m),
            circulant(&model.stationary_covariance_row()),
        )?;
        let obs = model.observation();
        let mut observation = DMatrix::zeros(obs.len(), m);
        for (l, &n) in obs.nodes().iter().enumerate() {
            observation[(l, n)] = 1.0;
        }
        let var = obs.noise_std().powi(2);
        let observation_noise = DMatrix::from_diagonal_element(obs.len(), obs.len(), var);
        Ok(Self {
            transition,
            process_noise,
            initial,
            observation,
            observation_noise,
        })
    }

    pub fn predict(&self, belief: &GaussianBelief) -> GaussianBelief {
        let mean = &self.transition * &belief.mean;
        let mut cov =
            &self.transition * &belief.cov * self.transition.transpose() + &self.process_noise;
        symmetrise(&mut cov);
        GaussianBelief { mean, cov }
    }

    /// Run the filter over `T x L` observations, handing each filtering
    /// belief to `visit` in time order.
    pub fn filter<F>(&self, observations: &[f64], mut visit: F) -> Result<()>
    where
        F: FnMut(usize, &GaussianBelief) -> Result<()>,
    {
        let l = self.observation.nrows();
        if l == 0 || observations.len() % l != 0 {
            return Err(Error::invalid(
                "observations are not a whole number of batches",
            ));
        }
        let mut belief = self.initial.clone();
        for (t, y) in observations.chunks_exact(l).enumerate() {
            if t > 0 {
                belief = self.predict(&belief);
            }
            let y = DVector::from_column_slice(y);
            belief = kf_assimilate(&belief, &self.observation, &self.observation_noise, &y)
                .map_err(|e| Error::Assimilation {
                    time: t + 1,
                    source: Box::new(e),
                })?;
            visit(t + 1, &belief)?;
        }
        Ok(())
    }
}

/// Filtering means, standard deviations and expected smoothness coefficients.
#[derive(Clone, Debug)]
pub struct KalmanTrajectory {
    /// `T x M` row-major.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub smoothness: Vec<f64>,
}

/// Expected `sum_m |x_m - x_{m+1}|` (periodic) under a Gaussian belief.
pub fn gaussian_smoothness(belief: &GaussianBelief) -> f64 {
    let m = belief.dim();
    (0..m)
        .map(|i| {
            let j = (i + 1) % m;
            let mu = belief.mean[i] - belief.mean[j];
            let var = belief.cov[(i, i)] + belief.cov[(j, j)] - 2.0 * belief.cov[(i, j)];
            folded_normal_mean(mu, var.max(0.0).sqrt())
        })
        .sum()
}

/// `E|X|` for `X ~ N(mu, sigma^2)`.
pub fn folded_normal_mean(mu: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return mu.abs();
    }
    let z = mu / sigma;
    sigma * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp()
        + mu * statrs::function::erf::erf(z / std::f64::consts::SQRT_2)
}

/// Exact filtering marginals of the linear-Gaussian model.
pub fn kalman_filter_st(model: &StModel, observations: &[f64]) -> Result<KalmanTrajectory> {
    let system = LinearGaussianSystem::from_st(model)?;
    let mut out = KalmanTrajectory {
        means: Vec::new(),
        stds: Vec::new(),
        smoothness: Vec::new(),
    };
    system.filter(observations, |_, b| {
        out.means.extend(b.mean.iter());
        out.stds.extend(b.stds());
        out.smoothness.push(gaussian_smoothness(b));
        Ok(())
    })?;
    Ok(out)
}
