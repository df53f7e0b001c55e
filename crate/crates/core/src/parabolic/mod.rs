//! Time stepping for the Cauchy problem, twisted flows, the change of time
//! variable and vanishing-viscosity sweeps.

mod h_profile;
mod problem;
mod solve;
mod stepper;
mod time_change;
mod viscosity;

pub use h_profile::{h2_derivative, h2_profile, h_derivative, h_ode_residual, h_profile};
pub use problem::{
    DensityKind, DensitySpec, DtRule, FlowProblem, ForcingFn, ForcingSpec, ProblemError, SolverConfig, DEFAULT_FLOOR,
    DEFAULT_TOL_PSH,
};
pub use solve::{solve, solve_detailed, solve_twisted, step, step_size, SolveReport};
pub use stepper::{stepper_by_name, stepper_names, BackwardEuler, ExplicitEuler, StepSize, Stepper};
pub use time_change::{change_time_variable, transformed_problem, TimeChange};
pub use viscosity::{vanishing_viscosity_sweep, ViscosityReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParabolicError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("non-finite value at node {node} (t = {t})")]
    NonFinite { t: f64, node: usize },
    #[error("time step {dt:e} below 1e-12 at t = {t}")]
    DtUnderflow { t: f64, dt: f64 },
    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudget { steps: usize, t: f64 },
    #[error("unknown stepper {0:?}")]
    UnknownStepper(String),
    #[error("implicit step did not converge at t = {t}: residual {residual:e}")]
    Implicit { t: f64, residual: f64 },
    #[error("twist h must be positive and finite, got {value} at t = {t}")]
    Twist { t: f64, value: f64 },
    #[error("time change: {0}")]
    TimeChange(String),
    #[error("h profile: {0}")]
    HProfile(String),
    #[error("viscosity sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Background(#[from] crate::background::BackgroundError),
}
