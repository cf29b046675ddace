//! Assimilation algorithms and the sequential filtering loop.

pub mod etkf;
pub mod etpf;
pub mod kalman;
pub mod resampling;
pub mod run;
pub mod sletpf;
pub mod weights;

pub use etkf::{etkf_assimilate, letkf_assimilate, LocalObservations};
pub use etpf::{
    apply_plan, etpf_assimilate, local_etpf_assimilate, squared_distance_costs, TransportSolver,
};
pub use kalman::{
    circulant, folded_normal_mean, gaussian_smoothness, kalman_filter_st, kf_assimilate,
    GaussianBelief, KalmanTrajectory, LinearGaussianSystem,
};
pub use resampling::{
    apply_node_ancestors, resample_local_independent, resample_multinomial, resample_systematic,
};
pub use run::{
    build_patch_partition, filter_run, FilterKind, FilterOutput, FilterSpec, ResamplingScheme,
    RunOptions,
};
pub use sletpf::{Sletpf, SletpfUpdate};
pub use weights::{compute_local_weights, observation_log_likelihoods, Granularity, LocalWeights};
