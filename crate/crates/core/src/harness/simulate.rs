//! Model construction and seeded simulation of a reference trajectory.

use super::config::{ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::models::io::{write_binary, write_observations_csv, Header, PayloadKind};
use crate::models::{KsModel, StModel, StateSpaceModel, StateTransform, Transformed};
use crate::rng::{stream, Stream};
use std::path::Path;

/// Build the state-space model described by `config`.
pub fn build_model(config: &ModelConfig) -> Result<Box<dyn StateSpaceModel>> {
    Ok(match config.kind {
        ModelKind::StLinear => Box::new(StModel::new(config.st)?),
        ModelKind::StTransformed => Box::new(Transformed::new(
            StModel::new(config.st)?,
            st_transform(config)?,
        )),
        ModelKind::KsLinear | ModelKind::KsTanh => Box::new(KsModel::new(config.ks_params())?),
    })
}

/// State transform between the base linear model and the modelled state.
pub fn st_transform(config: &ModelConfig) -> Result<StateTransform> {
    match config.kind {
        ModelKind::StTransformed => StateTransform::asinh(config.st.transform_scale),
        _ => Ok(StateTransform::Identity),
    }
}

/// One hidden trajectory and its noisy observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub times: usize,
    pub nodes: usize,
    /// `T x M` hidden states.
    pub states: Vec<f64>,
    /// `T x L` observed values.
    pub observations: Vec<f64>,
    pub observation_nodes: Vec<usize>,
    pub observation_positions: Vec<f64>,
}

impl Truth {
    pub fn observation_count(&self) -> usize {
        self.observation_nodes.len()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[(t - 1) * self.nodes..t * self.nodes]
    }

    /// Write `trajectory.bin`, `observations.bin` and `observations.csv`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = Header {
            kind: PayloadKind::Trajectory,
            nodes: self.nodes as u64,
            times: self.times as u64,
            observations: self.observation_count() as u64,
            particles: 0,
        };
        let file = |name: &str| std::fs::File::create(dir.join(name)).map(std::io::BufWriter::new);
        write_binary(file("trajectory.bin")?, &header, &self.states)?;
        let header = Header {
            kind: PayloadKind::Observations,
            ..header
        };
        write_binary(file("observations.bin")?, &header, &self.observations)?;
        write_observations_csv(
            file("observations.csv")?,
            &self.observation_nodes,
            &self.observation_positions,
            &self.observations,
        )
    }
}

/// Draw a trajectory from the model prior and observe it.
///
/// The state at time 1 is the initial draw; later states advance one
/// observation interval each. The transformed spatio-temporal model is
/// simulated through its base model, so both spatio-temporal variants
/// consume the same noise and produce identical observations.
pub fn simulate_truth(config: &ModelConfig, seed: u64) -> Result<Truth> {
    let times = config.times();
    if times == 0 {
        return Err(Error::Config(
            "at least one observation time is required".into(),
        ));
    }
    let transform = st_transform(config)?;
    let base_config = match config.kind {
        ModelKind::StTransformed => ModelConfig {
            kind: ModelKind::StLinear,
            ..config.clone()
        },
        _ => config.clone(),
    };
    let model = build_model(&base_config)?;
    let m = model.node_count();
    let obs = model.observation();
    let l = obs.len();

    let mut states = vec![0.0; times * m];
    let mut observations = vec![0.0; times * l];
    let mut state = vec![0.0; m];
    model.sample_initial(&mut stream(seed, Stream::TruthState, 0, 0, 0), &mut state)?;
    for t in 1..=times {
        if t > 1 {
            model.forward(
                &mut state,
                t,
                &mut stream(seed, Stream::TruthState, 0, t as u64, 0),
            )?;
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelBlowUp { time: t });
        }
        let mut rng = stream(seed, Stream::TruthObservation, 0, t as u64, 0);
        obs.sample(&state, &mut rng, &mut observations[(t - 1) * l..t * l]);
        states[(t - 1) * m..t * m].copy_from_slice(&state);
    }
    transform.apply_slice(&mut states);
    Ok(Truth {
        times,
        nodes: m,
        states,
        observations,
        observation_nodes: obs.nodes().to_vec(),
        observation_positions: obs.positions().to_vec(),
    })
}
