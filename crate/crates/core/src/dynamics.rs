//! Van der Pol vector field, its forced variant, and the desired circular
//! trajectory all controllers are asked to track.
//!
//! The model is the second-order oscillator
//!
//! ```text
//! x'' - mu (1 - x^2) x' + x = F(t)
//! ```
//!
//! written as the first-order system `(x, v)` with `v = x'`. Everything in
//! this module is a pure function; values are `Copy` and freely shareable
//! across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonlinear damping gain of the van der Pol system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdpParams {
    mu: f64,
}

impl VdpParams {
    /// `mu` must be finite and strictly positive.
    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mu must be finite and > 0, got {mu}"
            )));
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Phase-plane state: position and velocity, both dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub v: f64,
}

impl State {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite()
    }
}

/// Circular target orbit of radius `amplitude` in the `(x, v)` plane:
/// `x_d(t) = A sin t`, `v_d(t) = A cos t`, `a_d(t) = -A sin t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredTrajectory {
    amplitude: f64,
}

impl DesiredTrajectory {
    /// `amplitude` must be finite and strictly positive.
    pub fn new(amplitude: f64) -> Result<Self> {
        if !amplitude.is_finite() || amplitude <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "desired amplitude must be finite and > 0, got {amplitude}"
            )));
        }
        Ok(Self { amplitude })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Position, velocity and acceleration of the target orbit at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (s, c) = t.sin_cos();
        (self.amplitude * s, self.amplitude * c, -self.amplitude * s)
    }
}

/// An applied force `F(t, state)`.
///
/// Feedback laws read the state; feedforward laws ignore it. Implementations
/// must be deterministic: the same `(t, state)` always yields the same force.
pub trait Force: Sync {
    fn eval(&self, t: f64, state: State) -> f64;
}

impl<F> Force for F
where
    F: Fn(f64, State) -> f64 + Sync,
{
    fn eval(&self, t: f64, state: State) -> f64 {
        self(t, state)
    }
}

/// The unforced system, `F = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForce;

impl Force for ZeroForce {
    fn eval(&self, _t: f64, _state: State) -> f64 {
        0.0
    }
}

#[inline]
pub(crate) fn rhs_raw(mu: f64, x: f64, v: f64, force: f64) -> (f64, f64) {
    (v, mu * (1.0 - x * x) * v - x + force)
}

/// Forced van der Pol right-hand side: `(x', v') = (v, mu (1 - x^2) v - x + F)`.
pub fn rhs(params: VdpParams, s: State, force: f64) -> Result<(f64, f64)> {
    if !s.is_finite() || !force.is_finite() {
        return Err(Error::InvalidState {
            t: f64::NAN,
            x: s.x,
            v: s.v,
        });
    }
    Ok(rhs_raw(params.mu, s.x, s.v, force))
}
