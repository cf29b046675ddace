//! Ground truth construction, single runs and parameter sweeps.

use super::config::{ExperimentConfig, FilterConfig, ModelKind};
use super::simulate::{build_model, simulate_truth, st_transform, Truth};
use crate::error::{Error, Result};
use crate::filters::{
    build_patch_partition, filter_run, kalman_filter_st, observation_log_likelihoods, FilterKind,
    FilterOutput, FilterSpec, LocalObservations, RunOptions, Sletpf,
};
use crate::metrics::{
    pushforward_ground_truth, rmse_mean, rmse_smoothness, rmse_std, GroundTruth, MetricsRecord,
};
use crate::models::{
    predict_ensemble_observations, sample_initial_ensemble, StModel, StateSpaceModel,
};
use crate::ot::TransportPlan;
use crate::spatial::{effective_observations, median, Localisation, PartitionOfUnity};
use std::time::Instant;

/// Replica index reserved for the bootstrap reference filter so that its
/// draws never coincide with a benchmarked repeat.
pub const REFERENCE_REPLICA: u32 = u32::MAX;

/// Reference filtering statistics for the configured model.
///
/// Linear-Gaussian: exact Kalman filter. Transformed: Kalman beliefs of the
/// base model pushed through the transform by Monte Carlo. Kuramoto-
/// Sivashinsky: a large bootstrap particle filter.
pub fn build_ground_truth(config: &ExperimentConfig, truth: &Truth) -> Result<GroundTruth> {
    let seed = config.run.seed;
    match config.model.kind {
        ModelKind::StLinear => {
            let model = StModel::new(config.model.st)?;
            Ok(GroundTruth::from_kalman(kalman_filter_st(
                &model,
                &truth.observations,
            )?))
        }
        ModelKind::StTransformed => {
            let model = StModel::new(config.model.st)?;
            let t = st_transform(&config.model)?;
            pushforward_ground_truth(
                &model,
                &truth.observations,
                t,
                config.run.ground_truth_samples,
                seed,
            )
        }
        ModelKind::KsLinear | ModelKind::KsTanh => {
            let model = build_model(&config.model)?;
            reference_ground_truth(
                model.as_ref(),
                &truth.observations,
                config.run.reference_particles,
                seed,
            )
        }
    }
}

/// Ground truth from a bootstrap particle filter with `particles` members.
pub fn reference_ground_truth(
    model: &dyn StateSpaceModel,
    observations: &[f64],
    particles: usize,
    seed: u64,
) -> Result<GroundTruth> {
    let spec = FilterSpec::new(
        FilterKind::BootstrapPf,
        particles,
        Localisation::gaspari_cohn(1.0)?,
    );
    let out = filter_run(
        model,
        &spec,
        observations,
        seed,
        REFERENCE_REPLICA,
        RunOptions::default(),
    )?;
    GroundTruth::from_reference(out.means, out.stds, out.smoothness, particles)
}

/// One row of the results table. Failed runs keep their parameters and
/// carry the error message instead of metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub model: ModelKind,
    pub filter: FilterKind,
    /// Patch count and kernel width, for the patch filter only.
    pub patches: Option<usize>,
    pub kernel_width: Option<f64>,
    /// Localisation radius, for the local filters only.
    pub radius: Option<f64>,
    pub particles: usize,
    pub seed: u64,
    pub repeat: u32,
    pub metrics: Option<MetricsRecord>,
    pub error: Option<String>,
}

impl RunRow {
    /// Row for a run that failed with `message`.
    pub fn failed(
        config: &ExperimentConfig,
        filter: &FilterConfig,
        repeat: u32,
        message: String,
    ) -> Self {
        Self {
            error: Some(message),
            ..Self::new(config, filter, repeat)
        }
    }

    fn new(config: &ExperimentConfig, filter: &FilterConfig, repeat: u32) -> Self {
        Self {
            model: config.model.kind,
            filter: filter.kind,
            patches: filter.uses_patches().then_some(filter.patches),
            kernel_width: filter.uses_patches().then_some(filter.kernel_width),
            radius: filter.uses_radius().then_some(filter.radius),
            particles: filter.particles,
            seed: config.run.seed,
            repeat,
            metrics: None,
            error: None,
        }
    }
}

/// Outcome of one successful filter run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub row: RunRow,
    pub output: FilterOutput,
    pub config_hash: String,
    /// Wall time of the whole run, forward integration included.
    pub wall_seconds: f64,
}

/// A configured model with its simulated truth and ground truth, shared by
/// every filter run against it.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Box<dyn StateSpaceModel>,
    pub truth: Truth,
    pub ground_truth: GroundTruth,
}

impl Experiment {
    /// Simulate the truth and build the ground truth.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        let truth = simulate_truth(&config.model, config.run.seed)?;
        let ground_truth = build_ground_truth(&config, &truth)?;
        Self::with_ground_truth(config, truth, ground_truth)
    }

    pub fn with_ground_truth(
        config: ExperimentConfig,
        truth: Truth,
        ground_truth: GroundTruth,
    ) -> Result<Self> {
        let model = build_model(&config.model)?;
        if truth.nodes != model.node_count() || ground_truth.means.len() != truth.states.len() {
            return Err(Error::Config(
                "truth and ground truth do not match the model".into(),
            ));
        }
        Ok(Self {
            config,
            model,
            truth,
            ground_truth,
        })
    }

    /// Run one filter configuration once; `repeat` selects independent
    /// filter randomness under the same master seed.
    pub fn run_once(
        &self,
        filter: &FilterConfig,
        repeat: u32,
        options: RunOptions,
    ) -> Result<RunResult> {
        let start = Instant::now();
        let spec = filter.spec()?;
        let output = filter_run(
            self.model.as_ref(),
            &spec,
            &self.truth.observations,
            self.config.run.seed,
            repeat,
            options,
        )?;
        let wall_seconds = start.elapsed().as_secs_f64();
        let gt = &self.ground_truth;
        let metrics = MetricsRecord {
            rmse_mean: rmse_mean(&output.means, &gt.means)?,
            rmse_std: rmse_std(&output.stds, &gt.stds)?,
            rmse_smoothness: rmse_smoothness(&output.smoothness, &gt.smoothness)?,
            median_n_eff: output.median_effective_observations,
            assim_seconds: output.total_assim_seconds(),
        };
        let mut row = RunRow::new(&self.config, filter, repeat);
        row.metrics = Some(metrics);
        let config = ExperimentConfig {
            filter: filter.clone(),
            ..self.config.clone()
        };
        Ok(RunResult {
            row,
            output,
            config_hash: config.hash()?,
            wall_seconds,
        })
    }

    /// Run `filter` for every repeat, recording failures as rows.
    pub fn run_repeats(&self, filter: &FilterConfig) -> Vec<RunRow> {
        (0..self.config.run.repeats)
            .map(
                |rep| match self.run_once(filter, rep, RunOptions::default()) {
                    Ok(r) => r.row,
                    Err(e) => RunRow::failed(&self.config, filter, rep, e.to_string()),
                },
            )
            .collect()
    }

    /// Rows for the configured filter.
    pub fn run(&self) -> Vec<RunRow> {
        self.run_repeats(&self.config.filter)
    }

    /// Median effective observation count of `filter` on this model.
    pub fn median_effective_observations(&self, filter: &FilterConfig) -> Result<f64> {
        let loc = Localisation::new(filter.localisation, filter.radius)?;
        let obs = self.model.observation();
        let pou = match filter.kind {
            FilterKind::Sletpf => {
                build_patch_partition(self.model.as_ref(), filter.patches, filter.kernel_width)?
            }
            FilterKind::Letkf => {
                let local = LocalObservations::new(self.model.mesh(), obs.positions(), &loc);
                let sums: Vec<f64> = local
                    .per_node
                    .iter()
                    .map(|v| v.iter().map(|&(_, w)| w).sum())
                    .collect();
                return Ok(median(&sums));
            }
            FilterKind::Etpf | FilterKind::BootstrapPf => return Ok(obs.len() as f64),
        };
        Ok(effective_observations(&pou, obs.positions(), &loc).median)
    }

    /// Partition of unity and per-patch transport plans of the patch filter's
    /// first assimilation, for inspection.
    pub fn first_step_plans(
        &self,
        filter: &FilterConfig,
    ) -> Result<(PartitionOfUnity, Vec<TransportPlan>)> {
        let spec = filter.spec()?;
        let model = self.model.as_ref();
        let pou = build_patch_partition(model, spec.patches, spec.kernel_width)?;
        let sletpf = Sletpf::new(
            pou,
            model.observation().positions(),
            &spec.localisation,
            spec.solver,
        );
        let ens = sample_initial_ensemble(model, spec.particles, self.config.run.seed, 0)?;
        let predicted = predict_ensemble_observations(model, &ens)?;
        let l = self.truth.observation_count();
        let ll = observation_log_likelihoods(
            model.observation(),
            &predicted,
            &self.truth.observations[..l],
        );
        let update = sletpf.assimilate(&ens, &ll)?;
        Ok((sletpf.pou().clone(), update.plans))
    }

    /// Sweep every `(B, w, r)` cell with the configured repeats. Radii whose
    /// median effective observation count leaves the admissible window are
    /// dropped for the patch filter; the ensemble Kalman filter keeps its
    /// full grid.
    pub fn grid_search(&self, grid: &Grid) -> Result<GridResult> {
        let base = &self.config.filter;
        let (lo, hi) = self.config.admissible_window();
        let mut cells = Vec::new();
        let mut dropped = Vec::new();
        let patch_grid: Vec<(usize, f64)> = if base.uses_patches() {
            grid.patches
                .iter()
                .flat_map(|&b| grid.kernel_widths.iter().map(move |&w| (b, w)))
                .collect()
        } else {
            vec![(base.patches, base.kernel_width)]
        };
        let radii = if base.uses_radius() {
            grid.radii.clone()
        } else {
            vec![base.radius]
        };
        for &(patches, kernel_width) in &patch_grid {
            for &radius in &radii {
                let cell = FilterConfig {
                    patches,
                    kernel_width,
                    radius,
                    ..base.clone()
                };
                if cell.kind == FilterKind::Sletpf && grid.filter_admissible {
                    let n = self.median_effective_observations(&cell)?;
                    if n < lo || n > hi {
                        dropped.push(cell);
                        continue;
                    }
                }
                cells.push(cell);
            }
        }
        let mut rows = Vec::new();
        for cell in &cells {
            rows.extend(self.run_repeats(cell));
        }
        Ok(GridResult {
            cells,
            dropped,
            rows,
        })
    }

    /// Grid from the run configuration, with the configured filter's patch
    /// settings as the fallback.
    pub fn default_grid(&self) -> Grid {
        let f = &self.config.filter;
        let run = &self.config.run;
        Grid {
            radii: self.config.radius_grid(),
            patches: run.patch_counts.clone().unwrap_or_else(|| vec![f.patches]),
            kernel_widths: run
                .kernel_widths
                .clone()
                .unwrap_or_else(|| vec![f.kernel_width]),
            filter_admissible: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub radii: Vec<f64>,
    pub patches: Vec<usize>,
    pub kernel_widths: Vec<f64>,
    /// Apply the median effective observation window to patch filters.
    pub filter_admissible: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    RmseMean,
    RmseStd,
    RmseSmoothness,
    AssimSeconds,
}

impl Metric {
    pub fn of(self, m: &MetricsRecord) -> f64 {
        match self {
            Metric::RmseMean => m.rmse_mean,
            Metric::RmseStd => m.rmse_std,
            Metric::RmseSmoothness => m.rmse_smoothness,
            Metric::AssimSeconds => m.assim_seconds,
        }
    }
}

/// Minimum, median and maximum of one metric over the repeats of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            median: median(&v),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug)]
pub struct GridResult {
    /// Cells that were run, in sweep order.
    pub cells: Vec<FilterConfig>,
    /// Cells skipped by the admissibility window.
    pub dropped: Vec<FilterConfig>,
    /// `cells.len() * repeats` rows, failures included.
    pub rows: Vec<RunRow>,
}

impl GridResult {
    /// Rows belonging to `cell`.
    pub fn cell_rows<'a>(
        &'a self,
        cell: &'a FilterConfig,
    ) -> impl Iterator<Item = &'a RunRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.filter == cell.kind
                && r.particles == cell.particles
                && r.radius == cell.uses_radius().then_some(cell.radius)
                && r.patches == cell.uses_patches().then_some(cell.patches)
                && r.kernel_width == cell.uses_patches().then_some(cell.kernel_width)
        })
    }

    /// Spread of `metric` over the successful repeats of `cell`.
    pub fn spread(&self, cell: &FilterConfig, metric: Metric) -> Option<Spread> {
        let v: Vec<f64> = self
            .cell_rows(cell)
            .filter_map(|r| r.metrics.as_ref().map(|m| metric.of(m)))
            .collect();
        Spread::of(&v)
    }

    /// Cell with the lowest median of `metric`.
    pub fn best(&self, metric: Metric) -> Option<(&FilterConfig, Spread)> {
        self.cells
            .iter()
            .filter_map(|c| self.spread(c, metric).map(|s| (c, s)))
            .min_by(|a, b| a.1.median.total_cmp(&b.1.median))
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}
