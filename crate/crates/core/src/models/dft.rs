//! Real-signal DFT with the `1/M` factor on the forward transform.
//!
//! Coefficients are stored as the half spectrum `0..=K`, `K = floor(M/2)`.
//! Node `m` (0-based) sits at position `m / M`, so
//! `X_k = (1/M) sum_m x_m exp(-2 pi i k m / M)` and the inverse is
//! `x_m = sum_k X_k exp(2 pi i k m / M)` over the full Hermitian spectrum.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

#[derive(Clone)]
pub struct RealDft {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RealDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealDft").field("m", &self.m).finish()
    }
}

/// Reusable buffers for one thread of transforms.
#[derive(Clone, Debug)]
pub struct DftWorkspace {
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl RealDft {
    pub fn new(m: usize) -> Self {
        assert!(m > 0, "transform length must be positive");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        Self {
            m,
            forward,
            inverse,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    /// Number of stored coefficients, `K + 1`.
    #[inline]
    pub fn spectrum_len(&self) -> usize {
        self.m / 2 + 1
    }

    /// Whether index `K` is a Nyquist coefficient (its own conjugate).
    #[inline]
    pub fn has_nyquist(&self) -> bool {
        self.m % 2 == 0
    }

    pub fn workspace(&self) -> DftWorkspace {
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        DftWorkspace {
            buffer: vec![Complex64::default(); self.m],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [Complex64], ws: &mut DftWorkspace) {
        debug_assert_eq!(x.len(), self.m);
        debug_assert_eq!(out.len(), self.spectrum_len());
        for (b, &v) in ws.buffer.iter_mut().zip(x) {
            *b = Complex64::new(v, 0.0);
        }
        self.forward
            .process_with_scratch(&mut ws.buffer, &mut ws.scratch);
        let scale = 1.0 / self.m as f64;
        for (o, b) in out.iter_mut().zip(&ws.buffer) {
            *o = b * scale;
        }
        out[0].im = 0.0;
        if self.has_nyquist() {
            out[self.m / 2].im = 0.0;
        }
    }

    /// Inverse of [`RealDft::forward`]. Imaginary parts of the zero and
    /// Nyquist coefficients are ignored.
    pub fn inverse(&self, spectrum: &[Complex64], x: &mut [f64], ws: &mut DftWorkspace) {
        debug_assert_eq!(x.len(), self.m);
        debug_assert_eq!(spectrum.len(), self.spectrum_len());
        let m = self.m;
        let k_max = self.spectrum_len() - 1;
        let buf = &mut ws.buffer;
        buf[0] = Complex64::new(spectrum[0].re, 0.0);
        for k in 1..=k_max {
            if self.has_nyquist() && k == k_max {
                buf[k] = Complex64::new(spectrum[k].re, 0.0);
            } else {
                buf[k] = spectrum[k];
                buf[m - k] = spectrum[k].conj();
            }
        }
        self.inverse.process_with_scratch(buf, &mut ws.scratch);
        for (o, b) in x.iter_mut().zip(buf.iter()) {
            *o = b.re;
        }
    }
}

/// Angular frequencies `2 pi k` for `k = 0..=K`.
pub fn angular_frequencies(m: usize) -> Vec<f64> {
    (0..=m / 2)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64)
        .collect()
}

/// Node-space variance of `inverse(scale .* u)` for unit spectral noise `u`.
/// Off-axis modes contribute twice since they appear with their conjugate.
pub fn node_variance(scale: &[f64], m: usize) -> f64 {
    let k_max = scale.len() - 1;
    scale
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let self_conjugate = k == 0 || (m % 2 == 0 && k == k_max);
            if self_conjugate {
                s * s
            } else {
                2.0 * s * s
            }
        })
        .sum()
}
