//! Elementwise state transforms and the conjugated model they induce.

use super::observation::ObservationModel;
use super::StateSpaceModel;
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::spatial::PeriodicMesh;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StateTransform {
    Identity,
    /// `x -> asinh(scale * x)`.
    Asinh {
        scale: f64,
    },
}

impl StateTransform {
    pub fn asinh(scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!(
                "transform scale must be positive, got {scale}"
            )));
        }
        Ok(StateTransform::Asinh { scale })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            StateTransform::Identity => x,
            StateTransform::Asinh { scale } => (scale * x).asinh(),
        }
    }

    #[inline]
    pub fn invert(&self, y: f64) -> Result<f64> {
        let x = match *self {
            StateTransform::Identity => y,
            StateTransform::Asinh { scale } => y.sinh() / scale,
        };
        if x.is_finite() || !y.is_finite() {
            Ok(x)
        } else {
            Err(Error::TransformOverflow { value: y })
        }
    }

    pub fn apply_slice(&self, xs: &mut [f64]) {
        xs.iter_mut().for_each(|x| *x = self.apply(*x));
    }

    pub fn invert_slice(&self, ys: &mut [f64]) -> Result<()> {
        for y in ys.iter_mut() {
            *y = self.invert(*y)?;
        }
        Ok(())
    }
}

/// Base model seen through a transform: forward is `T . F . T^-1` with the
/// same noise, observations are `h . T^-1`, initial states are `T(x_1)`.
#[derive(Clone, Debug)]
pub struct Transformed<M> {
    base: M,
    transform: StateTransform,
}

impl<M: StateSpaceModel> Transformed<M> {
    pub fn new(base: M, transform: StateTransform) -> Self {
        Self { base, transform }
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn transform(&self) -> StateTransform {
        self.transform
    }
}

impl<M: StateSpaceModel> StateSpaceModel for Transformed<M> {
    fn mesh(&self) -> &PeriodicMesh {
        self.base.mesh()
    }

    fn observation(&self) -> &ObservationModel {
        self.base.observation()
    }

    fn sample_initial(&self, rng: &mut StreamRng, out: &mut [f64]) -> Result<()> {
        self.base.sample_initial(rng, out)?;
        self.transform.apply_slice(out);
        Ok(())
    }

    fn forward(&self, state: &mut [f64], time: usize, rng: &mut StreamRng) -> Result<()> {
        self.transform.invert_slice(state)?;
        self.base.forward(state, time, rng)?;
        self.transform.apply_slice(state);
        Ok(())
    }

    fn predict_observations(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        let obs = self.base.observation();
        for (o, &n) in out.iter_mut().zip(obs.nodes()) {
            *o = obs.operator().apply(self.transform.invert(state[n])?);
        }
        Ok(())
    }
}
