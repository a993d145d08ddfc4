//! Continuous stochastic Runge-Kutta (CSRK) schemes for the weak approximation
//! of Itô SDEs.
//!
//! A scheme ([`CsrkTableau`]) advances one step with a fixed number of drift
//! and diffusion evaluations and then yields the approximation anywhere inside
//! the step from θ-dependent weights. [`stats`] turns paths into weak-error
//! estimates, either by Monte Carlo or by exact enumeration of the discrete
//! increments.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod increments;
pub mod integrator;
pub mod sde_model;
pub mod stats;
pub mod tableau;

pub use error::{Error, Result, StageFamily};
pub use increments::{path_stream, StepIncrements};
pub use integrator::{compute_step, simulate_path, ContinuousPath, Integrator, StageCache, TimeGrid};
pub use sde_model::{Functional, Provenance, ReferenceSolution, SdeProblem};
pub use stats::{
    dense_error_profile, empirical_order, error_table, exact_weak_expectation, mc_expectation,
    mc_expectations, ErrorRecord, McConfig, MonteCarloEstimate, OrderEstimate,
};
pub use tableau::{builtin_scheme, check_conditions, parse_tableau, CsrkTableau, BUILTIN_NAMES};
