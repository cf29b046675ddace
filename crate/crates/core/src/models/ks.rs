//! Damped stochastic Kuramoto-Sivashinsky model integrated in the Fourier
//! domain: a fourth-order exponential time differencing Runge-Kutta step for
//! the drift followed by an additive Euler-Maruyama noise increment.

use super::dft::{angular_frequencies, DftWorkspace, RealDft};
use super::observation::{ObservationModel, ObservationOperator};
use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::rng::{fill_spectral_noise, StreamRng};
use crate::spatial::PeriodicMesh;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Points on the unit circle used to evaluate the exponential-integrator
/// coefficients without cancellation.
const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsParams {
    pub nodes: usize,
    pub times: usize,
    pub observations: usize,
    /// Integrator steps between consecutive observation times.
    pub steps_per_observation: usize,
    pub time_step: f64,
    pub length_scale: f64,
    pub damping: f64,
    pub noise_length_scale: f64,
    pub noise_amplitude: f64,
    pub obs_noise_std: f64,
    pub operator: ObservationOperator,
    /// Multiplier on the noise kernel spectrum for the initial state.
    pub init_scale: f64,
    /// Disable the quadratic term, leaving the linear damped system.
    pub nonlinear: bool,
}

impl Default for KsParams {
    fn default() -> Self {
        let length_scale = 32.0 * PI;
        Self {
            nodes: 512,
            times: 200,
            observations: 64,
            steps_per_observation: 10,
            time_step: 0.25,
            length_scale,
            damping: 1.0 / 6.0,
            noise_length_scale: 1.0 / length_scale,
            noise_amplitude: length_scale.powf(-0.5),
            obs_noise_std: 0.5,
            operator: ObservationOperator::Linear,
            init_scale: 1.0,
            nonlinear: true,
        }
    }
}

/// Scalar exponential-integrator coefficients for one mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct EtdCoefficients {
    e: f64,
    e_half: f64,
    q: f64,
    f1: f64,
    f2: f64,
    f3: f64,
}

impl EtdCoefficients {
    fn new(rate: f64, h: f64) -> Self {
        let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
        for j in 0..CONTOUR_POINTS {
            let theta = PI * (j as f64 + 0.5) / CONTOUR_POINTS as f64;
            let z = Complex64::new(rate * h, 0.0) + Complex64::from_polar(1.0, theta);
            let ez = z.exp();
            let z3 = z * z * z;
            q += (((z * 0.5).exp() - 1.0) / z).re;
            f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
            f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
            f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
        }
        // Points in the upper half circle suffice: the lower half are
        // conjugates, so the real parts coincide.
        let n = CONTOUR_POINTS as f64;
        Self {
            e: (rate * h).exp(),
            e_half: (rate * h * 0.5).exp(),
            q: h * q / n,
            f1: h * f1 / n,
            f2: h * f2 / n,
            f3: h * f3 / n,
        }
    }
}

impl KsParams {
    /// Coarse variant on `nodes` grid points. The domain shrinks with the
    /// grid below 128 nodes so the grid spacing stays under one length unit,
    /// which the stiff fourth-order term needs to stay resolved.
    pub fn reduced(nodes: usize, observations: usize, times: usize) -> Self {
        let length_scale = 32.0 * PI * (nodes as f64 / 128.0).min(1.0);
        Self {
            nodes,
            observations,
            times,
            length_scale,
            noise_length_scale: 1.0 / length_scale,
            noise_amplitude: length_scale.powf(-0.5),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct KsModel {
    params: KsParams,
    mesh: PeriodicMesh,
    dft: RealDft,
    observation: ObservationModel,
    /// Linear growth rate of each mode.
    rates: Vec<f64>,
    /// Multiplier of the squared field's spectrum in the nonlinear term;
    /// zero at Nyquist.
    nonlinear_gain: Vec<Complex64>,
    noise_kernel: Vec<f64>,
    etd: Vec<EtdCoefficients>,
}

/// Per-thread buffers for one integrator step.
struct Scratch {
    ws: DftWorkspace,
    field: Vec<f64>,
    nv: Vec<Complex64>,
    na: Vec<Complex64>,
    nb: Vec<Complex64>,
    nc: Vec<Complex64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
    c: Vec<Complex64>,
    noise: Vec<Complex64>,
}

impl KsModel {
    pub fn new(params: KsParams) -> Result<Self> {
        if !(params.time_step > 0.0) || !(params.length_scale > 0.0) {
            return Err(Error::invalid(
                "time step and length scale must be positive",
            ));
        }
        if params.damping < 0.0 || params.steps_per_observation == 0 {
            return Err(Error::invalid(
                "damping must be nonnegative and steps positive",
            ));
        }
        let m = params.nodes;
        let mesh = PeriodicMesh::new(m)?;
        let observation = ObservationModel::equispaced(
            &mesh,
            params.observations,
            params.operator,
            params.obs_noise_std,
        )?;
        let omega = angular_frequencies(m);
        let k_max = omega.len() - 1;
        let th = params.length_scale;
        let rates: Vec<f64> = omega
            .iter()
            .map(|w| (w / th).powi(2) - (w / th).powi(4) - params.damping)
            .collect();
        let nonlinear_gain = omega
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                if (m % 2 == 0 && k == k_max && k > 0) || !params.nonlinear {
                    Complex64::default()
                } else {
                    Complex64::new(0.0, w / (2.0 * th))
                }
            })
            .collect();
        let noise_kernel = omega
            .iter()
            .map(|w| params.noise_amplitude * (-(w * w) * params.noise_length_scale.powi(2)).exp())
            .collect();
        let etd = rates
            .iter()
            .map(|&r| EtdCoefficients::new(r, params.time_step))
            .collect();
        Ok(Self {
            params,
            mesh,
            dft: RealDft::new(m),
            observation,
            rates,
            nonlinear_gain,
            noise_kernel,
            etd,
        })
    }

    pub fn params(&self) -> &KsParams {
        &self.params
    }

    pub fn dft(&self) -> &RealDft {
        &self.dft
    }

    /// Linear growth rate of each mode, `k = 0..=K`.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn noise_kernel(&self) -> &[f64] {
        &self.noise_kernel
    }

    fn scratch(&self) -> Scratch {
        let n = self.dft.spectrum_len();
        let z = vec![Complex64::default(); n];
        Scratch {
            ws: self.dft.workspace(),
            field: vec![0.0; self.params.nodes],
            nv: z.clone(),
            na: z.clone(),
            nb: z.clone(),
            nc: z.clone(),
            a: z.clone(),
            b: z.clone(),
            c: z.clone(),
            noise: z,
        }
    }

    fn nonlinear(
        &self,
        v: &[Complex64],
        out: &mut [Complex64],
        field: &mut [f64],
        ws: &mut DftWorkspace,
    ) {
        if !self.params.nonlinear {
            out.iter_mut().for_each(|o| *o = Complex64::default());
            return;
        }
        self.dft.inverse(v, field, ws);
        field.iter_mut().for_each(|x| *x *= *x);
        self.dft.forward(field, out, ws);
        for (o, g) in out.iter_mut().zip(&self.nonlinear_gain) {
            *o *= g;
        }
    }

    /// Full drift `rate_k v_k + N_k(v)` of a spectral state.
    pub fn drift(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut s = self.scratch();
        let mut out = vec![Complex64::default(); v.len()];
        self.nonlinear(v, &mut out, &mut s.field, &mut s.ws);
        for ((o, x), r) in out.iter_mut().zip(v).zip(&self.rates) {
            *o += x * r;
        }
        out
    }

    /// One deterministic exponential-integrator step in place.
    fn etd_step(&self, v: &mut [Complex64], s: &mut Scratch) {
        let n = v.len();
        self.nonlinear(v, &mut s.nv, &mut s.field, &mut s.ws);
        for k in 0..n {
            let c = &self.etd[k];
            s.a[k] = v[k] * c.e_half + s.nv[k] * c.q;
        }
        self.nonlinear(&s.a, &mut s.na, &mut s.field, &mut s.ws);
        for k in 0..n {
            let c = &self.etd[k];
            s.b[k] = v[k] * c.e_half + s.na[k] * c.q;
        }
        self.nonlinear(&s.b, &mut s.nb, &mut s.field, &mut s.ws);
        for k in 0..n {
            let c = &self.etd[k];
            s.c[k] = s.a[k] * c.e_half + (s.nb[k] * 2.0 - s.nv[k]) * c.q;
        }
        self.nonlinear(&s.c, &mut s.nc, &mut s.field, &mut s.ws);
        for k in 0..n {
            let c = &self.etd[k];
            v[k] =
                v[k] * c.e + s.nv[k] * c.f1 + (s.na[k] + s.nb[k]) * (2.0 * c.f2) + s.nc[k] * c.f3;
        }
    }

    /// Advance a spectral state by `steps` integrator steps without noise.
    pub fn integrate_deterministic(&self, v: &mut [Complex64], steps: usize) {
        let mut s = self.scratch();
        for _ in 0..steps {
            self.etd_step(v, &mut s);
        }
    }
}

impl StateSpaceModel for KsModel {
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
        for (s, l) in spec.iter_mut().zip(&self.noise_kernel) {
            *s *= l * self.params.init_scale;
        }
        self.dft.inverse(&spec, out, &mut ws);
        Ok(())
    }

    fn forward(&self, state: &mut [f64], time: usize, rng: &mut StreamRng) -> Result<()> {
        let mut s = self.scratch();
        let mut v = vec![Complex64::default(); self.dft.spectrum_len()];
        self.dft.forward(state, &mut v, &mut s.ws);
        let sqrt_dt = self.params.time_step.sqrt();
        for _ in 0..self.params.steps_per_observation {
            self.etd_step(&mut v, &mut s);
            fill_spectral_noise(rng, self.params.nodes, &mut s.noise);
            for ((x, u), l) in v.iter_mut().zip(&s.noise).zip(&self.noise_kernel) {
                *x += u * (l * sqrt_dt);
            }
            if v.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::ModelBlowUp { time });
            }
        }
        self.dft.inverse(&v, state, &mut s.ws);
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::ModelBlowUp { time });
        }
        Ok(())
    }
}
