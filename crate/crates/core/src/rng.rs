//! Counter-addressed random streams.
//!
//! Every stochastic draw in a run is taken from a stream identified by
//! `(master seed, purpose, outer index, inner index)`. The 32-byte ChaCha
//! seed is the concatenation of those four words, so the numbers a particle
//! sees at a given time never depend on scheduling or worker count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags separating otherwise identical `(outer, inner)` indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    TruthState = 1,
    TruthObservation = 2,
    FilterInit = 3,
    FilterForward = 4,
    FilterResample = 5,
    GroundTruth = 6,
    Test = 99,
}

/// Build the generator for one stream. `replica` distinguishes independent
/// repeats that share the same master seed.
pub fn stream(seed: u64, purpose: Stream, replica: u32, outer: u64, inner: u64) -> StreamRng {
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..12].copy_from_slice(&(purpose as u32).to_le_bytes());
    bytes[12..16].copy_from_slice(&replica.to_le_bytes());
    bytes[16..24].copy_from_slice(&outer.to_le_bytes());
    bytes[24..32].copy_from_slice(&inner.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Complex normal with unit total variance: real and imaginary parts are
/// independent with variance 1/2 each.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = standard_normal(rng) * s;
    let im = standard_normal(rng) * s;
    Complex64::new(re, im)
}

/// Fill a half spectrum of length `K + 1` with the unit-variance noise used
/// by the spectral models: real at the zero frequency (and at the Nyquist
/// frequency when `m` is even), complex normal elsewhere.
pub fn fill_spectral_noise<R: Rng + ?Sized>(rng: &mut R, m: usize, out: &mut [Complex64]) {
    let half = out.len() - 1;
    for (k, slot) in out.iter_mut().enumerate() {
        let real_only = k == 0 || (m % 2 == 0 && k == half);
        *slot = if real_only {
            Complex64::new(standard_normal(rng), 0.0)
        } else {
            complex_normal(rng)
        };
    }
}
