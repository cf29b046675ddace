//! Experiment configuration read from TOML with `model`, `filter` and `run`
//! tables. Unknown keys are errors so that typos in sweep files surface
//! immediately.

use crate::error::{Error, Result};
use crate::filters::{FilterKind, FilterSpec, ResamplingScheme, TransportSolver};
use crate::models::{KsParams, ObservationOperator, StParams};
use crate::spatial::{Localisation, LocalisationKind};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    StLinear,
    StTransformed,
    KsLinear,
    KsTanh,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::StLinear => "st_linear",
            ModelKind::StTransformed => "st_transformed",
            ModelKind::KsLinear => "ks_linear",
            ModelKind::KsTanh => "ks_tanh",
        }
    }

    /// Window on the median effective observation count for admissible
    /// localisation radii of the particle filters.
    pub fn admissible_window(self) -> (f64, f64) {
        match self {
            ModelKind::KsTanh => (2.0, 6.0),
            _ => (1.0, 5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default)]
    pub st: StParams,
    #[serde(default)]
    pub ks: KsParams,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            st: StParams::default(),
            ks: KsParams::default(),
        }
    }

    /// KS parameters with the observation operator implied by the kind.
    pub fn ks_params(&self) -> KsParams {
        let operator = match self.kind {
            ModelKind::KsTanh => ObservationOperator::Tanh,
            _ => ObservationOperator::Linear,
        };
        KsParams {
            operator,
            ..self.ks
        }
    }

    pub fn times(&self) -> usize {
        match self.kind {
            ModelKind::StLinear | ModelKind::StTransformed => self.st.times,
            ModelKind::KsLinear | ModelKind::KsTanh => self.ks.times,
        }
    }

    pub fn nodes(&self) -> usize {
        match self.kind {
            ModelKind::StLinear | ModelKind::StTransformed => self.st.nodes,
            ModelKind::KsLinear | ModelKind::KsTanh => self.ks.nodes,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OtChoice {
    #[default]
    Exact,
    Entropic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub particles: usize,
    pub radius: f64,
    pub localisation: LocalisationKind,
    pub patches: usize,
    pub kernel_width: f64,
    pub ot: OtChoice,
    /// Entropic regulariser, used when `ot = "entropic"`.
    pub lambda: f64,
    pub inflation: f64,
    pub resampling: ResamplingScheme,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kind: FilterKind::Sletpf,
            particles: 100,
            radius: 0.02,
            localisation: LocalisationKind::GaspariCohn,
            patches: 128,
            kernel_width: 1.0 / 256.0,
            ot: OtChoice::Exact,
            lambda: 1e-3,
            inflation: 1.0,
            resampling: ResamplingScheme::Systematic,
        }
    }
}

impl FilterConfig {
    pub fn spec(&self) -> Result<FilterSpec> {
        let localisation = Localisation::new(self.localisation, self.radius)?;
        let solver = match self.ot {
            OtChoice::Exact => TransportSolver::Exact,
            OtChoice::Entropic => {
                if !(self.lambda > 0.0) {
                    return Err(Error::Config(format!(
                        "entropic lambda must be positive, got {}",
                        self.lambda
                    )));
                }
                TransportSolver::Entropic {
                    lambda: self.lambda,
                }
            }
        };
        if !(self.inflation > 0.0) {
            return Err(Error::Config("inflation must be positive".into()));
        }
        Ok(FilterSpec {
            kind: self.kind,
            particles: self.particles,
            localisation,
            patches: self.patches,
            kernel_width: self.kernel_width,
            solver,
            inflation: self.inflation,
            resampling: self.resampling,
        })
    }

    /// Whether patch count and kernel width affect this filter.
    pub fn uses_patches(&self) -> bool {
        self.kind == FilterKind::Sletpf
    }

    pub fn uses_radius(&self) -> bool {
        matches!(self.kind, FilterKind::Sletpf | FilterKind::Letkf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub repeats: u32,
    pub output: Option<PathBuf>,
    /// Localisation radii swept by `grid-search`; defaults depend on the filter.
    pub radii: Option<Vec<f64>>,
    pub patch_counts: Option<Vec<usize>>,
    pub kernel_widths: Option<Vec<f64>>,
    /// Override of the median effective observation window.
    pub admissible_window: Option<[f64; 2]>,
    /// Monte Carlo samples per time for the transformed-model ground truth.
    pub ground_truth_samples: usize,
    /// Particles of the bootstrap reference filter used as KS ground truth.
    pub reference_particles: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: 1,
            output: None,
            radii: None,
            patch_counts: None,
            kernel_widths: None,
            admissible_window: None,
            ground_truth_samples: 10_000,
            reference_particles: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl ExperimentConfig {
    pub fn new(model: ModelKind, filter: FilterKind) -> Self {
        Self {
            model: ModelConfig::new(model),
            filter: FilterConfig {
                kind: filter,
                ..FilterConfig::default()
            },
            run: RunConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn admissible_window(&self) -> (f64, f64) {
        match self.run.admissible_window {
            Some([lo, hi]) => (lo, hi),
            None => self.model.kind.admissible_window(),
        }
    }

    /// Default localisation grid: `0.001..=0.030` for particle filters,
    /// `0.010..=0.160` in steps of `0.002` for the ensemble Kalman filter.
    pub fn radius_grid(&self) -> Vec<f64> {
        if let Some(r) = &self.run.radii {
            return r.clone();
        }
        match self.filter.kind {
            FilterKind::Letkf => (0..=75).map(|i| (10 + 2 * i) as f64 / 1000.0).collect(),
            _ => (1..=30).map(|i| i as f64 / 1000.0).collect(),
        }
    }

    /// Short content hash of the configuration.
    pub fn hash(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest[..6].iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_paper_scale_defaults() {
        let cfg = ExperimentConfig::from_toml("[model]\nkind = \"st_linear\"\n").unwrap();
        assert_eq!(cfg.model.st.nodes, 512);
        assert_eq!(cfg.model.st.times, 200);
        assert_eq!(cfg.model.st.observations, 64);
        assert_eq!(cfg.filter.particles, 100);
        assert_eq!(cfg.admissible_window(), (1.0, 5.0));
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
            [model]
            kind = "ks_tanh"
            [model.ks]
            nodes = 32
            observations = 4
            times = 20
            [filter]
            kind = "sletpf"
            particles = 50
            radius = 0.05
            patches = 4
            kernel_width = 0.0625
            ot = "entropic"
            lambda = 0.01
            [run]
            seed = 7
            repeats = 2
            radii = [0.01, 0.02]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.model.ks_params().operator, ObservationOperator::Tanh);
        assert_eq!(cfg.model.ks.nodes, 32);
        assert_eq!(
            cfg.filter.spec().unwrap().solver,
            TransportSolver::Entropic { lambda: 0.01 }
        );
        assert_eq!(cfg.radius_grid(), vec![0.01, 0.02]);
        assert_eq!(cfg.admissible_window(), (2.0, 6.0));
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "[model]\nkind = \"st_linear\"\n[filter]\nparticle = 10\n";
        assert!(matches!(
            ExperimentConfig::from_toml(text),
            Err(Error::Config(_))
        ));
        let text = "[model]\nkind = \"st_linear\"\n[model.st]\nnode = 10\n";
        assert!(ExperimentConfig::from_toml(text).is_err());
    }

    #[test]
    fn default_grids() {
        let mut cfg = ExperimentConfig::new(ModelKind::StLinear, FilterKind::Letkf);
        let g = cfg.radius_grid();
        assert_eq!(g.len(), 76);
        assert_eq!((g[0], g[75]), (0.010, 0.160));
        cfg.filter.kind = FilterKind::Sletpf;
        let g = cfg.radius_grid();
        assert_eq!(g.len(), 30);
        assert_eq!((g[0], g[29]), (0.001, 0.030));
    }
}
