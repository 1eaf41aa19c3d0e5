//! Optimal time and optimal target control of the internally controlled heat
//! equation with a time-varying pointwise norm bound `M(t)`.
//!
//! The state lives in a truncated Dirichlet eigenbasis ([`spectral`]), controls
//! are piecewise constant in time ([`admissible`]), and the two optimal-control
//! maps are computed by a support-function dual solver ([`target`]) and a
//! bisection on top of it ([`time`]). A direct-transcription solver
//! ([`oracle`]) provides independent ground truth, and [`bangbang`] checks the
//! saturation and uniqueness properties of the optimal controls.

pub mod admissible;
pub mod bangbang;
pub mod cli;
pub mod error;
pub mod fixtures;
pub mod oracle;
pub mod quadrature;
pub mod scenario;
pub mod spectral;
pub mod target;
pub mod time;

pub use admissible::{bound_at, membership_residual, BoundProfile, ControlProfile, TimeGrid};
pub use bangbang::{
    bang_bang_check, uniqueness_check, BangBangReport, OptimalControl, UniquenessReport,
};
pub use error::{Error, Result};
pub use oracle::{
    solve_projected_gradient, transcribe, OracleOptions, OracleSolution, TranscriptionProblem,
};
pub use scenario::{Model, Scenario};
pub use spectral::{
    build_basis, control_gram, propagate, solve_state, ControlRegion, DomainSpec, EigenBasis,
    GramMatrix, SpectralField,
};
pub use target::{
    dual_objective, reconstruct_control, solve_eps, support_reachable, DualCertificate,
    SolveOptions, TargetSolution,
};
pub use time::{eps_curve, solve_tau, verify_inverse, EpsCurve, InverseReport, TimeSolution};
