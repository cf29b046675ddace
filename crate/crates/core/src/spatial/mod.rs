//! Geometry of the periodic unit interval, localisation tapers and
//! partitions of unity over patches of mesh nodes.

mod localisation;
mod mesh;
mod pou;

pub use localisation::{gaspari_cohn, Localisation, LocalisationKind};
pub use mesh::{periodic_distance, PeriodicMesh};
pub use pou::{
    build_equal_partition, build_pou, effective_observations, median, patch_point_distance,
    subsample_nodes, EffectiveObservations, PartitionOfUnity, SUPPORT_THRESHOLD,
};
