//! Benchmark workbench for circular-trajectory control of the forced van der
//! Pol oscillator.
//!
//! Four controllers are implemented and compared: a physics-informed neural
//! network trained to emit the control trajectory ([`pinn`]), idealized
//! nonlinear feedforward, linearized LQR feedback and their combination
//! ([`controllers`]). The [`integrator`] drives the forced dynamics, the
//! [`metrics`] module quantifies tracking error and computational burden,
//! and the [`harness`] runs benchmark/sweep experiments and persists
//! plot-ready data.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod metrics;
pub mod pinn;

pub use controllers::{
    closed_loop_eigenvalues, combined_force, cost_functional, fb_force, ff_force, linearize,
    solve_are, CombinedLaw, CostWeights, FeedbackLaw, FeedbackSignConvention, FeedforwardLaw,
    LinearModel, RiccatiSolution,
};
pub use dynamics::{rhs, DesiredTrajectory, Force, State, VdpParams, ZeroForce};
pub use error::{Error, Result};
pub use harness::{
    run_benchmark, run_cell, run_lambda_sweep, run_mu_sweep, ControllerKind, ExperimentConfig,
    RunRecord,
};
pub use integrator::{integrate, IntegratorConfig, Trajectory};
pub use metrics::{rel_error, timing_capture, ErrorReport, TimingRecord};
pub use pinn::{
    loss_eval, loss_grad, mlp_forward, mlp_time_derivs, pidoc_control, LossBreakdown, MlpParams,
    PidocRun, TrainConfig, TrainingData,
};
