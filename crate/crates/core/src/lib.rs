//! Diffusion processes on the unit simplex.
//!
//! States are vectors of `N` non-negative fractions summing to one. Processes
//! are Ito diffusions in the first `N - 1` fractions whose drift and diffusion
//! are arranged so that sample paths never leave the simplex. The crate
//! provides the named processes (beta, Wright-Fisher, Dirichlet, generalized
//! Dirichlet), an ensemble Euler-Maruyama integrator, boundary audits, and
//! moment statistics with rate cross-validation and stationary oracles.

pub mod integrator;
pub mod linalg;
pub mod process;
pub mod realizability;
pub mod state;
pub mod statistics;

pub use integrator::{
    simulate, simulate_with, step, BoundaryPolicy, IntegratorConfig, IntegratorError, RandomSource, RunStats,
    Scheme, SimulationOptions, Snapshot, Trajectory,
};
pub use linalg::SquareMatrix;
pub use process::{ParamError, ProcessDefinition, ProcessSpec};
pub use realizability::{audit_boundary, audit_covariance_structure, audit_moment_bounds, AuditReport, ToleranceSet};
pub use state::{make_state, BoundaryFace, Ensemble, ReducedState, SimplexState};
pub use statistics::{estimate_moments, estimate_rates, MomentRates, MomentSet};
