//! The physics-informed control loss: a data term anchoring the network to
//! the (amplitude-normalized) simulation, an initial-position term, and a
//! trajectory-dynamics term driving `x'' + x` to match the target orbit's.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::dynamics::DesiredTrajectory;
use crate::error::{Error, Result};
use crate::pinn::mlp::{backward_batch, forward_batch, MlpParams};

/// Collocation grid and training positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    t_grid: Vec<f64>,
    x_train: Vec<f64>,
}

impl TrainingData {
    pub fn new(t_grid: Vec<f64>, x_train: Vec<f64>) -> Result<Self> {
        if t_grid.is_empty() || x_train.is_empty() {
            return Err(Error::EmptyData);
        }
        if t_grid.len() != x_train.len() {
            return Err(Error::ShapeMismatch(format!(
                "t_grid has {} samples, x_train has {}",
                t_grid.len(),
                x_train.len()
            )));
        }
        if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("t_grid must be strictly increasing".into()));
        }
        if t_grid.iter().chain(x_train.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite training sample".into()));
        }
        Ok(Self { t_grid, x_train })
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn x_train(&self) -> &[f64] {
        &self.x_train
    }

    pub fn len(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_grid.is_empty()
    }
}

/// The three mean-squared-error terms and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse_nn: f64,
    pub mse_i: f64,
    pub mse_d: f64,
    pub total: f64,
}

/// Shape of the trajectory-dynamics term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseDForm {
    /// `mean[((ad - x'') + (xd - x))^2]`: the two residuals are summed
    /// before squaring.
    #[default]
    SumBeforeSquare,
    /// Ablation variant: `mean[(ad - x'')^2] + mean[(xd - x)^2]`.
    Separated,
}

struct LossTerms {
    breakdown: LossBreakdown,
    seed_x: Array1<f64>,
    seed_ddx: Array1<f64>,
}

fn eval_terms(
    x: &Array1<f64>,
    ddx: &Array1<f64>,
    data: &TrainingData,
    desired: &DesiredTrajectory,
    form: MseDForm,
) -> LossTerms {
    let n = data.len();
    let n_f = n as f64;
    let lam = desired.amplitude();

    let mut seed_x = Array1::zeros(n);
    let mut seed_ddx = Array1::zeros(n);

    // Data term with amplitude scaling: mean[(x_train - x/lambda)^2].
    let mut mse_nn = 0.0;
    for i in 0..n {
        let r = data.x_train[i] - x[i] / lam;
        mse_nn += r * r;
        seed_x[i] += -2.0 * r / (lam * n_f);
    }
    mse_nn /= n_f;

    // Initial-position term: the constant residual is summed over the batch,
    // so it carries weight 1 rather than 1/N.
    let (xd0, _, _) = desired.eval(data.t_grid[0]);
    let r0 = x[0] - xd0;
    let mse_i = r0 * r0;
    seed_x[0] += 2.0 * r0;

    // Trajectory-dynamics term.
    let mut mse_d = 0.0;
    match form {
        MseDForm::SumBeforeSquare => {
            for i in 0..n {
                let (xd, _, ad) = desired.eval(data.t_grid[i]);
                let r = (ad - ddx[i]) + (xd - x[i]);
                mse_d += r * r;
                seed_x[i] += -2.0 * r / n_f;
                seed_ddx[i] += -2.0 * r / n_f;
            }
        }
        MseDForm::Separated => {
            for i in 0..n {
                let (xd, _, ad) = desired.eval(data.t_grid[i]);
                let ra = ad - ddx[i];
                let rx = xd - x[i];
                mse_d += ra * ra + rx * rx;
                seed_x[i] += -2.0 * rx / n_f;
                seed_ddx[i] += -2.0 * ra / n_f;
            }
        }
    }
    mse_d /= n_f;

    LossTerms {
        breakdown: LossBreakdown {
            mse_nn,
            mse_i,
            mse_d,
            total: mse_nn + mse_i + mse_d,
        },
        seed_x,
        seed_ddx,
    }
}

/// Loss breakdown at `params` under the chosen dynamics-term form.
pub fn loss_eval_with(
    params: &MlpParams,
    data: &TrainingData,
    desired: &DesiredTrajectory,
    form: MseDForm,
) -> Result<LossBreakdown> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let fwd = forward_batch(params, data.t_grid());
    Ok(eval_terms(&fwd.x, &fwd.ddx, data, desired, form).breakdown)
}

/// Loss breakdown with the dynamics residuals summed before squaring.
pub fn loss_eval(
    params: &MlpParams,
    data: &TrainingData,
    desired: &DesiredTrajectory,
) -> Result<LossBreakdown> {
    loss_eval_with(params, data, desired, MseDForm::SumBeforeSquare)
}

/// Loss and its exact gradient with respect to every weight and bias
/// (layer-major order, matching [`MlpParams::flatten`]), differentiated
/// through the second time derivative inside the dynamics term.
pub fn loss_grad_with(
    params: &MlpParams,
    data: &TrainingData,
    desired: &DesiredTrajectory,
    form: MseDForm,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let fwd = forward_batch(params, data.t_grid());
    let terms = eval_terms(&fwd.x, &fwd.ddx, data, desired, form);
    let grad = backward_batch(params, &fwd, &terms.seed_x, &terms.seed_ddx);
    Ok((terms.breakdown, grad))
}

pub fn loss_grad(
    params: &MlpParams,
    data: &TrainingData,
    desired: &DesiredTrajectory,
) -> Result<(LossBreakdown, Vec<f64>)> {
    loss_grad_with(params, data, desired, MseDForm::SumBeforeSquare)
}
