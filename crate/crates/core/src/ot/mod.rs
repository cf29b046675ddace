//! Discrete optimal transport between `P` unit-mass sources and `P` targets
//! carrying mass `P * w_q`.

mod brute_force;
mod network_simplex;
mod problem;
mod sinkhorn;

pub use brute_force::brute_force_uniform;
pub use network_simplex::{solve_exact, InitialBasis, NetworkSimplex, PivotRule};
pub use problem::{validate_plan, MarginalError, SolverKind, TransportPlan, TransportProblem};
pub use sinkhorn::{solve_entropic, SinkhornOptions};
