//! Linear stochastic advection-diffusion ("stochastic turbulence") model with
//! exact Gaussian transitions in the Fourier domain.

use super::dft::{angular_frequencies, node_variance, RealDft};
use super::observation::{ObservationModel, ObservationOperator};
use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::rng::{fill_spectral_noise, StreamRng};
use crate::spatial::PeriodicMesh;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StParams {
    pub nodes: usize,
    pub times: usize,
    pub observations: usize,
    /// Time between observations.
    pub time_step: f64,
    pub diffusion: f64,
    pub advection: f64,
    pub damping: f64,
    /// Scale of the asinh state transform used by the transformed variant.
    pub transform_scale: f64,
    pub kernel_length_scale: f64,
    pub kernel_amplitude: f64,
    pub obs_noise_std: f64,
}

impl Default for StParams {
    fn default() -> Self {
        Self {
            nodes: 512,
            times: 200,
            observations: 64,
            time_step: 2.5,
            diffusion: 4e-5,
            advection: 0.1,
            damping: 0.1,
            transform_scale: 5.0,
            kernel_length_scale: 4e-3,
            kernel_amplitude: 0.1,
            obs_noise_std: 0.5,
        }
    }
}

/// Per-mode coefficients for `k = 0..=K`.
#[derive(Clone, Debug)]
pub struct StTables {
    pub omega: Vec<f64>,
    /// Noise kernel spectrum.
    pub kernel: Vec<f64>,
    /// Decay rate of each mode, strictly positive.
    pub decay: Vec<f64>,
    /// Complex drift rate `i advection omega - decay`, real at Nyquist.
    pub drift: Vec<Complex64>,
    /// Stationary standard deviation.
    pub a: Vec<f64>,
    /// One-step propagator `exp(drift * dt)`.
    pub b: Vec<Complex64>,
    /// One-step noise scale.
    pub c: Vec<f64>,
}

impl StTables {
    pub fn new(p: &StParams) -> Result<Self> {
        if p.diffusion < 0.0 || p.damping < 0.0 {
            return Err(Error::invalid("diffusion and damping must be nonnegative"));
        }
        if !(p.time_step > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        let m = p.nodes;
        let omega = angular_frequencies(m);
        let k_max = omega.len() - 1;
        let kernel: Vec<f64> = omega
            .iter()
            .map(|w| p.kernel_amplitude * (-(w * w) * p.kernel_length_scale.powi(2)).exp())
            .collect();
        let decay: Vec<f64> = omega
            .iter()
            .map(|w| p.diffusion * w * w + p.damping)
            .collect();
        if let Some(k) = decay.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::invalid(format!("mode {k} has zero decay rate")));
        }
        let drift: Vec<Complex64> = omega
            .iter()
            .zip(&decay)
            .enumerate()
            .map(|(k, (&w, &d))| {
                let nyquist = m % 2 == 0 && k == k_max && k > 0;
                let advect = if nyquist { 0.0 } else { p.advection * w };
                Complex64::new(-d, advect)
            })
            .collect();
        let a: Vec<f64> = kernel
            .iter()
            .zip(&decay)
            .map(|(l, d)| l / (2.0 * d).sqrt())
            .collect();
        let b = drift.iter().map(|x| (x * p.time_step).exp()).collect();
        let c = a
            .iter()
            .zip(&decay)
            .map(|(a, d)| a * (-(-2.0 * d * p.time_step).exp_m1()).sqrt())
            .collect();
        Ok(Self {
            omega,
            kernel,
            decay,
            drift,
            a,
            b,
            c,
        })
    }

    /// Marginal variance of every node under the stationary distribution.
    pub fn stationary_node_variance(&self, m: usize) -> f64 {
        node_variance(&self.a, m)
    }
}

#[derive(Clone, Debug)]
pub struct StModel {
    params: StParams,
    tables: StTables,
    mesh: PeriodicMesh,
    dft: RealDft,
    observation: ObservationModel,
}

impl StModel {
    pub fn new(params: StParams) -> Result<Self> {
        let mesh = PeriodicMesh::new(params.nodes)?;
        let tables = StTables::new(&params)?;
        let observation = ObservationModel::equispaced(
            &mesh,
            params.observations,
            ObservationOperator::Linear,
            params.obs_noise_std,
        )?;
        Ok(Self {
            params,
            tables,
            dft: RealDft::new(params.nodes),
            mesh,
            observation,
        })
    }

    pub fn params(&self) -> &StParams {
        &self.params
    }

    pub fn tables(&self) -> &StTables {
        &self.tables
    }

    pub fn dft(&self) -> &RealDft {
        &self.dft
    }

    /// Apply the deterministic part of one transition, `x -> F x`.
    pub fn propagate_mean(&self, state: &mut [f64]) {
        let mut ws = self.dft.workspace();
        let mut spec = vec![Complex64::default(); self.dft.spectrum_len()];
        self.dft.forward(state, &mut spec, &mut ws);
        for (s, b) in spec.iter_mut().zip(&self.tables.b) {
            *s *= b;
        }
        self.dft.inverse(&spec, state, &mut ws);
    }

    /// Covariance of `inverse(scale .* u)` between nodes `i` and `i + lag`.
    fn circulant_covariance(&self, scale: &[f64]) -> Vec<f64> {
        let m = self.params.nodes;
        let k_max = scale.len() - 1;
        (0..m)
            .map(|lag| {
                scale
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let phase = 2.0 * std::f64::consts::PI * (k * lag) as f64 / m as f64;
                        if k == 0 || (m % 2 == 0 && k == k_max) {
                            s * s * phase.cos()
                        } else {
                            2.0 * s * s * phase.cos()
                        }
                    })
                    .sum()
            })
            .collect()
    }

    /// First column of the circulant stationary covariance.
    pub fn stationary_covariance_row(&self) -> Vec<f64> {
        self.circulant_covariance(&self.tables.a)
    }

    /// First column of the circulant one-step process-noise covariance.
    pub fn process_noise_covariance_row(&self) -> Vec<f64> {
        self.circulant_covariance(&self.tables.c)
    }
}

impl StateSpaceModel for StModel {
    fn mesh(&self) -> &PeriodicMesh {
        &self.mesh
    }

    fn observation(&self) -> &ObservationModel {
        &self.observation
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        let mut ws = self.dft.workspace();
        let mut spec = vec![Complex64::default(); self.dft.spectrum_len()];
        fill_spectral_noise(rng, self.params.nodes, &mut spec);
        for (s, a) in spec.iter_mut().zip(&self.tables.a) {
            *s *= a;
        }
        self.dft.inverse(&spec, out, &mut ws);
        Ok(())
    }

    fn forward(&self, state: &mut [f64], _time: usize, rng: &mut StreamRng) -> Result<()> {
        let mut ws = self.dft.workspace();
        let n = self.dft.spectrum_len();
        let mut spec = vec![Complex64::default(); n];
        let mut noise = vec![Complex64::default(); n];
        self.dft.forward(state, &mut spec, &mut ws);
        fill_spectral_noise(rng, self.params.nodes, &mut noise);
        for k in 0..n {
            spec[k] = spec[k] * self.tables.b[k] + noise[k] * self.tables.c[k];
        }
        self.dft.inverse(&spec, state, &mut ws);
        Ok(())
    }
}
