//! Sequential prediction and assimilation over an observation sequence.

use super::etkf::{letkf_assimilate, LocalObservations};
use super::etpf::{etpf_assimilate, TransportSolver};
use super::resampling::{resample_multinomial, resample_systematic};
use super::sletpf::Sletpf;
use super::weights::{compute_local_weights, observation_log_likelihoods, Granularity};
use crate::error::{Error, Result};
use crate::metrics::{ensemble_smoothness, ensemble_stats};
use crate::models::{
    forward_ensemble, predict_ensemble_observations, sample_initial_ensemble, Ensemble,
    StateSpaceModel,
};
use crate::rng::{stream, Stream};
use crate::spatial::{build_equal_partition, build_pou, median, Localisation, PartitionOfUnity};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Letkf,
    Etpf,
    Sletpf,
    BootstrapPf,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Letkf => "letkf",
            FilterKind::Etpf => "etpf",
            FilterKind::Sletpf => "sletpf",
            FilterKind::BootstrapPf => "bootstrap_pf",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    Multinomial,
    #[default]
    Systematic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub particles: usize,
    /// Observation taper for local filters.
    pub localisation: Localisation,
    pub patches: usize,
    pub kernel_width: f64,
    pub solver: TransportSolver,
    /// Multiplicative prior anomaly inflation for the ensemble Kalman filters.
    pub inflation: f64,
    pub resampling: ResamplingScheme,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, particles: usize, localisation: Localisation) -> Self {
        Self {
            kind,
            particles,
            localisation,
            patches: 1,
            kernel_width: 0.0,
            solver: TransportSolver::Exact,
            inflation: 1.0,
            resampling: ResamplingScheme::Systematic,
        }
    }

    pub fn with_patches(mut self, patches: usize, kernel_width: f64) -> Self {
        self.patches = patches;
        self.kernel_width = kernel_width;
        self
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Keep every filtering ensemble (`T x P x M`).
    pub record_ensembles: bool,
}

#[derive(Clone, Debug)]
pub struct FilterOutput {
    pub times: usize,
    pub nodes: usize,
    /// `T x M` filtering means and standard deviations.
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Ensemble smoothness coefficient per time.
    pub smoothness: Vec<f64>,
    /// Assimilation wall time per time step, forward integration excluded.
    pub assim_seconds: Vec<f64>,
    pub median_effective_observations: f64,
    /// Local weight units that fell back to uniform weights, over the run.
    pub degenerate_units: usize,
    pub ensembles: Option<Vec<f64>>,
}

impl FilterOutput {
    pub fn total_assim_seconds(&self) -> f64 {
        self.assim_seconds.iter().sum()
    }
}

/// Build the partition of unity used by a patch filter.
pub fn build_patch_partition(
    model: &dyn StateSpaceModel,
    patches: usize,
    kernel_width: f64,
) -> Result<PartitionOfUnity> {
    let mesh = model.mesh();
    build_pou(build_equal_partition(mesh, patches)?, mesh, kernel_width)
}

enum Method {
    Letkf(LocalObservations),
    Global,
    Sletpf(Box<Sletpf>),
}

/// Run the filter over `T x L` observations: the ensemble is initialised
/// from the model prior, then each time is predicted (except the first)
/// and assimilated. Randomness comes from `(seed, replica)` streams.
pub fn filter_run(
    model: &dyn StateSpaceModel,
    spec: &FilterSpec,
    observations: &[f64],
    seed: u64,
    replica: u32,
    options: RunOptions,
) -> Result<FilterOutput> {
    let obs = model.observation();
    let l = obs.len();
    let m = model.node_count();
    let p = spec.particles;
    if l == 0 || observations.len() % l != 0 {
        return Err(Error::invalid(
            "observations are not a whole number of batches",
        ));
    }
    if p < 2 {
        return Err(Error::invalid("filters need at least two particles"));
    }
    let times = observations.len() / l;
    let (method, median_n) = match spec.kind {
        FilterKind::Letkf => {
            let local = LocalObservations::new(model.mesh(), obs.positions(), &spec.localisation);
            let sums: Vec<f64> = local
                .per_node
                .iter()
                .map(|v| v.iter().map(|&(_, w)| w).sum())
                .collect();
            (Method::Letkf(local), median(&sums))
        }
        FilterKind::Etpf | FilterKind::BootstrapPf => (Method::Global, l as f64),
        FilterKind::Sletpf => {
            let pou = build_patch_partition(model, spec.patches, spec.kernel_width)?;
            let filter = Sletpf::new(pou, obs.positions(), &spec.localisation, spec.solver);
            let med = filter.effective_observations().median;
            (Method::Sletpf(Box::new(filter)), med)
        }
    };

    let mut out = FilterOutput {
        times,
        nodes: m,
        means: Vec::with_capacity(times * m),
        stds: Vec::with_capacity(times * m),
        smoothness: Vec::with_capacity(times),
        assim_seconds: Vec::with_capacity(times),
        median_effective_observations: median_n,
        degenerate_units: 0,
        ensembles: options
            .record_ensembles
            .then(|| Vec::with_capacity(times * p * m)),
    };

    let mut ens = sample_initial_ensemble(model, p, seed, replica)?;
    for (t0, y) in observations.chunks_exact(l).enumerate() {
        let t = t0 + 1;
        if t > 1 {
            forward_ensemble(model, &mut ens, t, seed, replica)?;
        }
        let start = Instant::now();
        let (next, degenerate) = assimilate(model, spec, &method, &ens, y, t, seed, replica)
            .map_err(|e| Error::Assimilation {
                time: t,
                source: Box::new(e),
            })?;
        out.assim_seconds.push(start.elapsed().as_secs_f64());
        ens = next;
        if !ens.is_finite() {
            return Err(Error::Assimilation {
                time: t,
                source: Box::new(Error::LinearAlgebra("non-finite filtering ensemble".into())),
            });
        }
        out.degenerate_units += degenerate;
        let (mean, std) = ensemble_stats(&ens);
        out.means.extend(mean);
        out.stds.extend(std);
        out.smoothness.push(ensemble_smoothness(&ens));
        if let Some(rec) = out.ensembles.as_mut() {
            rec.extend_from_slice(ens.as_slice());
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn assimilate(
    model: &dyn StateSpaceModel,
    spec: &FilterSpec,
    method: &Method,
    ens: &Ensemble,
    y: &[f64],
    t: usize,
    seed: u64,
    replica: u32,
) -> Result<(Ensemble, usize)> {
    let obs = model.observation();
    let p = ens.particles();
    let predicted = predict_ensemble_observations(model, ens)?;
    match method {
        Method::Letkf(local) => Ok((
            letkf_assimilate(ens, &predicted, obs, local, y, spec.inflation)?,
            0,
        )),
        Method::Global => {
            let ll = observation_log_likelihoods(obs, &predicted, y);
            let w = compute_local_weights(&ll, p, Granularity::Global)?;
            let next = if spec.kind == FilterKind::BootstrapPf {
                let mut rng = stream(seed, Stream::FilterResample, replica, t as u64, 0);
                let idx = match spec.resampling {
                    ResamplingScheme::Multinomial => resample_multinomial(w.unit(0), &mut rng),
                    ResamplingScheme::Systematic => resample_systematic(w.unit(0), &mut rng),
                };
                ens.select_rows(&idx)
            } else {
                etpf_assimilate(ens, w.unit(0), None, spec.solver)?
            };
            Ok((next, w.degenerate_units))
        }
        Method::Sletpf(filter) => {
            let ll = observation_log_likelihoods(obs, &predicted, y);
            let update = filter.assimilate(ens, &ll)?;
            Ok((update.ensemble, update.weights.degenerate_units))
        }
    }
}
