//! Implicit time discretization of the doubly nonlinear flow
//! `|v_t|^{p-2} v_t = Δ_p v` on gridded domains with zero Dirichlet data,
//! together with the monotone quantities it carries and the extraction of
//! p-ground states and optimal Poincaré constants as large-time limits.
//!
//! * [`grid`]: domains, grid functions, quadrature and norms.
//! * [`pcalc`]: `J_p`, gradients, the p-Dirichlet energy and Rayleigh quotient.
//! * [`step`]: one implicit step as a convex minimization.
//! * [`flow`]: trajectories, diagnostics, decay rates and ground states.
//! * [`oracle`]: flow-independent reference solutions.
//! * [`checks`], [`sweep`], [`snapshot`]: verification, p-sweeps and file formats.

pub mod checks;
pub mod error;
pub mod flow;
pub mod grid;
pub mod oracle;
pub mod pcalc;
pub mod snapshot;
pub mod step;
pub mod sweep;

pub use error::{Error, Result};
pub use flow::{
    extract_ground_state, run_flow, DiagnosticsRecord, FlowConfig, FlowTrajectory, GroundStateResult, Termination,
};
pub use grid::{DomainSpec, Grid, GridFunction};
pub use pcalc::PExponent;
pub use step::{implicit_step, StepConfig, StepResult};
