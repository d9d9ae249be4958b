//! Physics-informed control of the oscillator: a small dense tanh network is
//! trained by a quasi-Newton optimizer to emit the controlled trajectory
//! directly, with the control objective encoded in its loss.
//!
//! The pipeline ([`pidoc_control`]):
//! 1. simulate the unforced system on the collocation grid and rescale the
//!    positions to unit peak amplitude as training data,
//! 2. initialize the network from a seeded widened-Glorot draw,
//! 3. minimize the combined loss with limited-memory BFGS,
//! 4. sample the trained network: velocity and acceleration come from its
//!    exact time derivatives, matching the loss's own derivative machinery.

pub mod checkpoint;
pub mod lbfgs;
mod loss;
mod mlp;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use lbfgs::{LbfgsConfig, LbfgsOutcome, Termination};
pub use loss::{
    loss_eval, loss_eval_with, loss_grad, loss_grad_with, LossBreakdown, MseDForm, TrainingData,
};
pub use mlp::{mlp_forward, mlp_time_derivs, MlpParams, DEFAULT_INIT_GAIN};

use crate::dynamics::{rhs_raw, DesiredTrajectory, State, VdpParams, ZeroForce};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};

/// Training-run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Stop when the gradient inf-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative per-step loss decrease falls below this.
    pub rel_decrease_tol: f64,
    /// Quasi-Newton memory (stored curvature pairs).
    pub history: usize,
    pub seed: u64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Multiplier on the Glorot initialization limit.
    pub init_gain: f64,
    /// Initial state of the unforced simulation that generates training data.
    pub train_init: [f64; 2],
    /// Dynamics-term form; the separated variant exists for ablation.
    pub mse_d_form: MseDForm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            grad_tol: 1e-8,
            rel_decrease_tol: 1e-12,
            history: 10,
            seed: 0,
            hidden_layers: 6,
            hidden_width: 30,
            init_gain: DEFAULT_INIT_GAIN,
            train_init: [1.0, 0.0],
            mse_d_form: MseDForm::SumBeforeSquare,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.rel_decrease_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence tolerances must be > 0".into()));
        }
        if self.history == 0 {
            return Err(Error::InvalidConfig("history must be >= 1".into()));
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::InvalidConfig("network must have hidden layers".into()));
        }
        if !(self.init_gain > 0.0 && self.init_gain.is_finite()) {
            return Err(Error::InvalidConfig("init_gain must be > 0".into()));
        }
        if self.train_init.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("train_init must be finite".into()));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers + 2);
        sizes.push(1);
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(1);
        sizes
    }
}

/// Everything a finished training run produced.
#[derive(Debug, Clone)]
pub struct PidocRun {
    pub trajectory: Trajectory,
    pub params: MlpParams,
    /// Loss breakdown at iteration 0 and after every accepted step.
    pub history: Vec<(u64, LossBreakdown)>,
    pub initial_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    /// Set when the optimizer's line search failed before any stopping rule
    /// fired; the best-so-far parameters are still returned.
    pub degraded: bool,
    pub training_data: TrainingData,
}

/// Generate training data for `sys` on the grid of `integ`: the unforced
/// simulation from `train_init`, rescaled to unit peak amplitude so the
/// amplitude-scaled data term anchors the network at amplitude `lambda`
/// rather than at the free limit cycle's.
pub fn training_data(
    sys: VdpParams,
    train_init: [f64; 2],
    integ: &IntegratorConfig,
) -> Result<TrainingData> {
    let sim = integrate(
        sys,
        &ZeroForce,
        State::new(train_init[0], train_init[1]),
        integ,
    )?;
    let peak = sim.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InvalidConfig(
            "training simulation is identically zero; cannot normalize".into(),
        ));
    }
    let x_train = sim.x.iter().map(|v| v / peak).collect();
    TrainingData::new(sim.t, x_train)
}

/// Train the network and emit the controlled trajectory.
pub fn pidoc_control(
    sys: VdpParams,
    desired: &DesiredTrajectory,
    cfg: &TrainConfig,
    integ: &IntegratorConfig,
) -> Result<PidocRun> {
    cfg.validate()?;
    integ.validate()?;
    let data = training_data(sys, cfg.train_init, integ)?;

    let [t0, t1] = integ.t_span;
    let start = MlpParams::glorot_with_gain(&cfg.sizes(), cfg.seed, cfg.init_gain)?
        .with_input_span(t0, t1)?;

    let template = start.clone();
    let form = cfg.mse_d_form;
    // The optimizer accepts the last-evaluated point of each iteration, so
    // the breakdown stashed by the objective always belongs to it.
    let stash: RefCell<Option<LossBreakdown>> = RefCell::new(None);
    let fail: RefCell<Option<Error>> = RefCell::new(None);
    let objective = |flat: &[f64]| -> (f64, Vec<f64>) {
        let params = match template.with_flat(flat) {
            Ok(p) => p,
            Err(e) => {
                *fail.borrow_mut() = Some(e);
                return (f64::INFINITY, vec![0.0; flat.len()]);
            }
        };
        match loss_grad_with(&params, &data, desired, form) {
            Ok((lb, g)) => {
                *stash.borrow_mut() = Some(lb);
                (lb.total, g)
            }
            Err(e) => {
                *fail.borrow_mut() = Some(e);
                (f64::INFINITY, vec![0.0; flat.len()])
            }
        }
    };

    let initial_loss = loss_eval_with(&start, &data, desired, form)?;
    let history: RefCell<Vec<(u64, LossBreakdown)>> = RefCell::new(vec![(0, initial_loss)]);

    let lcfg = LbfgsConfig {
        max_iterations: cfg.max_iterations,
        grad_tol: cfg.grad_tol,
        rel_decrease_tol: cfg.rel_decrease_tol,
        history: cfg.history,
        ..Default::default()
    };
    let outcome = lbfgs::minimize(objective, &start.flatten(), &lcfg, |iter, _x, f| {
        let lb = (*stash.borrow()).unwrap_or(LossBreakdown {
            mse_nn: f64::NAN,
            mse_i: f64::NAN,
            mse_d: f64::NAN,
            total: f,
        });
        history.borrow_mut().push((iter as u64, lb));
    });
    let history = history.into_inner();
    if let Some(e) = fail.into_inner() {
        return Err(e);
    }

    let params = template.with_flat(&outcome.x)?;
    let final_loss = history.last().map(|(_, lb)| *lb).unwrap_or(initial_loss);

    // Sample the trained network on the same grid; velocity and acceleration
    // come from its exact time derivatives. The recorded force is the one
    // the dynamics would need to realize this trajectory:
    // F = a - mu (1 - x^2) v + x.
    let grid = integ.grid();
    let n = grid.len();
    let mu = sys.mu();
    let fwd = mlp::forward_batch(&params, &grid);
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for (i, &t) in grid.iter().enumerate() {
        let (xi, vi, ai) = (fwd.x[i], fwd.dx[i], fwd.ddx[i]);
        if !(xi.is_finite() && vi.is_finite() && ai.is_finite()) {
            return Err(Error::InvalidState { t, x: xi, v: vi });
        }
        let (_, dv_unforced) = rhs_raw(mu, xi, vi, 0.0);
        x.push(xi);
        v.push(vi);
        a.push(ai);
        f.push(ai - dv_unforced);
    }

    Ok(PidocRun {
        trajectory: Trajectory {
            t: grid,
            x,
            v,
            a,
            f,
        },
        params,
        history,
        initial_loss,
        final_loss,
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
        degraded: outcome.degraded,
        training_data: data,
    })
}
