//! Deterministic control laws: idealized nonlinear feedforward, linearized
//! LQR feedback, and their combination.
//!
//! The feedback path linearizes the plant about the origin, synthesizes PD
//! gains from the algebraic Riccati equation, and applies them to the
//! tracking error. Two sign conventions are provided for the error feedback:
//! `PaperAsWritten` applies the force `-Kd (vd - v) - Kp (xd - x)`, which
//! pushes the state away from the target under positive gains;
//! `StandardTracking` flips both signs. The default is `PaperAsWritten`, so
//! the documented feedback failure mode is reproducible out of the box; the
//! comparison between conventions is itself a harness experiment.

pub mod riccati;

use nalgebra::{Complex, DMatrix, Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{DesiredTrajectory, Force, State, VdpParams};
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Small-signal model `X' = A X + B u` of the forced oscillator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

/// LQR weights: symmetric PSD `Q` on the state error, positive scalar `r`
/// on the input.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    q: Matrix2<f64>,
    r: f64,
}

impl CostWeights {
    pub fn new(q: Matrix2<f64>, r: f64) -> Result<Self> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("Q has non-finite entries".into()));
        }
        if (q - q.transpose()).norm() > 1e-12 * q.norm().max(1.0) {
            return Err(Error::InvalidConfig("Q must be symmetric".into()));
        }
        if q.symmetric_eigenvalues().iter().any(|&e| e < -1e-12) {
            return Err(Error::InvalidConfig("Q must be positive semidefinite".into()));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidConfig(format!("R must be > 0, got {r}")));
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> &Matrix2<f64> {
        &self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

impl Default for CostWeights {
    /// Unit weights `Q = I`, `R = 1`.
    fn default() -> Self {
        Self {
            q: Matrix2::identity(),
            r: 1.0,
        }
    }
}

/// Stabilizing Riccati solution and the PD gain row `K = [Kp, Kd]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub s: Matrix2<f64>,
    pub k: RowVector2<f64>,
}

impl RiccatiSolution {
    pub fn kp(&self) -> f64 {
        self.k[0]
    }

    pub fn kd(&self) -> f64 {
        self.k[1]
    }
}

/// Sign convention applied by the error-feedback law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackSignConvention {
    /// `F = -Kd (vd - v) - Kp (xd - x)`.
    #[default]
    #[serde(rename = "paper")]
    PaperAsWritten,
    /// `F = +Kd (vd - v) + Kp (xd - x)`.
    #[serde(rename = "standard")]
    StandardTracking,
}

impl std::fmt::Display for FeedbackSignConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::PaperAsWritten => write!(f, "paper"),
            Self::StandardTracking => write!(f, "standard"),
        }
    }
}

impl std::str::FromStr for FeedbackSignConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::PaperAsWritten),
            "standard" => Ok(Self::StandardTracking),
            other => Err(Error::InvalidConfig(format!(
                "unknown sign convention '{other}' (expected 'paper' or 'standard')"
            ))),
        }
    }
}

/// Linearization of the forced oscillator about the origin (the `x^2 x'`
/// term dropped): `A = [[0, 1], [-1, mu]]`, `B = [0, 1]'`.
pub fn linearize(params: VdpParams) -> LinearModel {
    LinearModel {
        a: Matrix2::new(0.0, 1.0, -1.0, params.mu()),
        b: Vector2::new(0.0, 1.0),
    }
}

/// Stabilizing LQR synthesis for the 2x2 model.
pub fn solve_are(model: &LinearModel, weights: &CostWeights) -> Result<RiccatiSolution> {
    let a = DMatrix::from_fn(2, 2, |i, j| model.a[(i, j)]);
    let b = DMatrix::from_fn(2, 1, |i, _| model.b[i]);
    let q = DMatrix::from_fn(2, 2, |i, j| weights.q[(i, j)]);
    let r = DMatrix::from_element(1, 1, weights.r);
    let sol = riccati::solve_care(&a, &b, &q, &r)?;
    Ok(RiccatiSolution {
        s: Matrix2::from_fn(|i, j| sol.s[(i, j)]),
        k: RowVector2::new(sol.k[(0, 0)], sol.k[(0, 1)]),
    })
}

/// Eigenvalues of the closed loop `A - B K`. Diagnostic only; nothing in the
/// control path consumes them.
pub fn closed_loop_eigenvalues(model: &LinearModel, sol: &RiccatiSolution) -> [Complex<f64>; 2] {
    let a_cl = model.a - model.b * sol.k;
    let eigs = a_cl.complex_eigenvalues();
    [eigs[0], eigs[1]]
}

/// Open-loop force that makes the desired orbit an exact solution of the
/// forced dynamics: `F(t) = ad - mu (1 - xd^2) vd + xd`. Ignores the state.
#[derive(Debug, Clone, Copy)]
pub struct FeedforwardLaw {
    mu: f64,
    desired: DesiredTrajectory,
}

impl Force for FeedforwardLaw {
    fn eval(&self, t: f64, _state: State) -> f64 {
        let (xd, vd, ad) = self.desired.eval(t);
        ad - self.mu * (1.0 - xd * xd) * vd + xd
    }
}

pub fn ff_force(params: VdpParams, desired: DesiredTrajectory) -> FeedforwardLaw {
    FeedforwardLaw {
        mu: params.mu(),
        desired,
    }
}

/// PD feedback on the tracking error under the chosen sign convention.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackLaw {
    kp: f64,
    kd: f64,
    desired: DesiredTrajectory,
    sign: FeedbackSignConvention,
}

impl Force for FeedbackLaw {
    fn eval(&self, t: f64, state: State) -> f64 {
        let (xd, vd, _) = self.desired.eval(t);
        let ex = xd - state.x;
        let ev = vd - state.v;
        match self.sign {
            FeedbackSignConvention::PaperAsWritten => -self.kd * ev - self.kp * ex,
            FeedbackSignConvention::StandardTracking => self.kd * ev + self.kp * ex,
        }
    }
}

pub fn fb_force(
    sol: &RiccatiSolution,
    desired: DesiredTrajectory,
    sign: FeedbackSignConvention,
) -> FeedbackLaw {
    FeedbackLaw {
        kp: sol.kp(),
        kd: sol.kd(),
        desired,
        sign,
    }
}

/// Pointwise sum of two forces.
#[derive(Debug, Clone, Copy)]
pub struct CombinedLaw<A, B>(pub A, pub B);

impl<A: Force, B: Force> Force for CombinedLaw<A, B> {
    fn eval(&self, t: f64, state: State) -> f64 {
        self.0.eval(t, state) + self.1.eval(t, state)
    }
}

pub fn combined_force<A: Force, B: Force>(ff: A, fb: B) -> CombinedLaw<A, B> {
    CombinedLaw(ff, fb)
}

/// Trapezoidal approximation of the LQR cost along a recorded trajectory,
/// with the tracking error as state and the recorded force as input.
pub fn cost_functional(traj: &Trajectory, desired: &DesiredTrajectory, w: &CostWeights) -> f64 {
    let integrand = |i: usize| -> f64 {
        let (xd, vd, _) = desired.eval(traj.t[i]);
        let e = Vector2::new(traj.x[i] - xd, traj.v[i] - vd);
        let u = traj.f[i];
        (e.transpose() * w.q * e)[0] + u * w.r * u
    };
    let mut total = 0.0;
    for i in 0..traj.len().saturating_sub(1) {
        let dt = traj.t[i + 1] - traj.t[i];
        total += 0.5 * (integrand(i) + integrand(i + 1)) * dt;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ZeroForce;
    use crate::integrator::{integrate, IntegratorConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn mu(v: f64) -> VdpParams {
        VdpParams::new(v).unwrap()
    }

    fn lam(v: f64) -> DesiredTrajectory {
        DesiredTrajectory::new(v).unwrap()
    }

    #[test]
    fn linearize_examples() {
        let m = linearize(mu(1.0));
        assert_eq!(m.a, Matrix2::new(0.0, 1.0, -1.0, 1.0));
        assert_eq!(m.b, Vector2::new(0.0, 1.0));
        let m10 = linearize(mu(10.0));
        assert_eq!(m10.a, Matrix2::new(0.0, 1.0, -1.0, 10.0));
        for v in [0.5, 1.0, 3.0, 10.0] {
            assert_abs_diff_eq!(linearize(mu(v)).a.determinant(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn solve_are_unit_weights_mu1() {
        // Closed forms from the quadratic formula on the 2x2 equation:
        // S12 = sqrt(2) - 1, S22 = 1 + sqrt(2 sqrt(2)).
        let sol = solve_are(&linearize(mu(1.0)), &CostWeights::default()).unwrap();
        let s12 = std::f64::consts::SQRT_2 - 1.0;
        let s22 = 1.0 + (2.0 * std::f64::consts::SQRT_2).sqrt();
        assert_abs_diff_eq!(sol.kp(), s12, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.kd(), s22, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.s, sol.s.transpose(), epsilon = 1e-12);
        for e in closed_loop_eigenvalues(&linearize(mu(1.0)), &sol) {
            assert!(e.re < 0.0, "closed-loop eigenvalue {e} not in left half-plane");
        }
    }

    #[test]
    fn are_residual_across_mu() {
        for m in [1.0, 3.0, 5.0, 7.0, 9.0, 10.0] {
            let model = linearize(mu(m));
            let sol = solve_are(&model, &CostWeights::default()).unwrap();
            let a = DMatrix::from_fn(2, 2, |i, j| model.a[(i, j)]);
            let b = DMatrix::from_fn(2, 1, |i, _| model.b[i]);
            let q = DMatrix::<f64>::identity(2, 2);
            let r_inv = DMatrix::from_element(1, 1, 1.0);
            let s = DMatrix::from_fn(2, 2, |i, j| sol.s[(i, j)]);
            let res = riccati::residual(&a, &b, &q, &r_inv, &s);
            assert!(res < 1e-10, "residual {res} at mu={m}");
            assert!(sol.s.symmetric_eigenvalues().iter().all(|&e| e >= -1e-12));
        }
    }

    proptest! {
        // Scaling Q and R by the same positive constant leaves K unchanged.
        #[test]
        fn gain_scaling_invariance(c in 0.05f64..50.0, m in 0.5f64..10.0) {
            let model = linearize(mu(m));
            let base = solve_are(&model, &CostWeights::default()).unwrap();
            let scaled_w = CostWeights::new(Matrix2::identity() * c, c).unwrap();
            let scaled = solve_are(&model, &scaled_w).unwrap();
            prop_assert!((scaled.kp() - base.kp()).abs() < 1e-9);
            prop_assert!((scaled.kd() - base.kd()).abs() < 1e-9);
        }
    }

    #[test]
    fn ff_force_closed_form() {
        let f = ff_force(mu(1.0), lam(5.0));
        let s = State::new(0.0, 0.0);
        assert_abs_diff_eq!(f.eval(0.0, s), -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(std::f64::consts::FRAC_PI_2, s), 0.0, epsilon = 1e-12);
        let f2 = ff_force(mu(3.0), lam(1.0));
        let expect = -3.0 * (std::f64::consts::FRAC_PI_4).cos() * 0.5;
        assert_abs_diff_eq!(f2.eval(std::f64::consts::FRAC_PI_4, s), expect, epsilon = 1e-12);
        // Direct form agrees with the reduced closed form everywhere.
        for t in [0.0_f64, 0.3, 1.7, 10.0, 49.9] {
            let closed = -1.0 * 5.0 * t.cos() * (1.0 - 25.0 * t.sin() * t.sin());
            assert_abs_diff_eq!(f.eval(t, s), closed, epsilon = 1e-9);
        }
    }

    #[test]
    fn fb_force_sign_conventions() {
        let sol = RiccatiSolution {
            s: Matrix2::identity(),
            k: RowVector2::new(1.0, 1.0),
        };
        // Desired (5, 0) occurs at t = pi/2 for amplitude 5.
        let t = std::f64::consts::FRAC_PI_2;
        let fb_paper = fb_force(&sol, lam(5.0), FeedbackSignConvention::PaperAsWritten);
        let fb_std = fb_force(&sol, lam(5.0), FeedbackSignConvention::StandardTracking);
        let origin = State::new(0.0, 0.0);
        assert_abs_diff_eq!(fb_paper.eval(t, origin), -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fb_std.eval(t, origin), 5.0, epsilon = 1e-12);
        let on_target = State::new(5.0, 0.0);
        assert_abs_diff_eq!(fb_paper.eval(t, on_target), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fb_std.eval(t, on_target), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn combined_is_pointwise_sum() {
        let zero = |_: f64, _: State| 0.0;
        let fb = fb_force(
            &RiccatiSolution {
                s: Matrix2::identity(),
                k: RowVector2::new(1.0, 1.0),
            },
            lam(5.0),
            FeedbackSignConvention::PaperAsWritten,
        );
        let c = combined_force(zero, fb);
        for (t, st) in [(0.0, State::new(0.3, -2.0)), (1.3, State::new(-1.0, 0.5))] {
            assert_eq!(c.eval(t, st), fb.eval(t, st));
        }
        let ff = ff_force(mu(1.0), lam(5.0));
        let c2 = combined_force(ff, zero);
        assert_eq!(c2.eval(0.7, State::new(0.0, 0.0)), ff.eval(0.7, State::new(0.0, 0.0)));
        // State on the desired orbit zeroes the feedback part.
        let c3 = combined_force(ff, fb);
        assert_abs_diff_eq!(c3.eval(0.0, State::new(0.0, 5.0)), -5.0, epsilon = 1e-12);
        for (t, st) in [(0.0, State::new(1.0, -1.0)), (2.2, State::new(0.1, 0.2))] {
            assert_eq!(c3.eval(t, st), ff.eval(t, st) + fb.eval(t, st));
        }
    }

    #[test]
    fn cost_functional_examples() {
        let d = lam(2.0);
        let n = 101;
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        // Trajectory exactly on the desired orbit, zero force.
        let on_orbit = Trajectory {
            t: t.clone(),
            x: t.iter().map(|ti| d.eval(*ti).0).collect(),
            v: t.iter().map(|ti| d.eval(*ti).1).collect(),
            a: vec![0.0; n],
            f: vec![0.0; n],
        };
        assert_eq!(cost_functional(&on_orbit, &d, &CostWeights::default()), 0.0);

        // Constant error e = (1, 0), zero force, over [0, 1].
        let offset = Trajectory {
            t: t.clone(),
            x: t.iter().map(|ti| d.eval(*ti).0 + 1.0).collect(),
            v: t.iter().map(|ti| d.eval(*ti).1).collect(),
            a: vec![0.0; n],
            f: vec![0.0; n],
        };
        let unit = cost_functional(&offset, &d, &CostWeights::default());
        assert_abs_diff_eq!(unit, 1.0, epsilon = 1e-12);
        let doubled_q = CostWeights::new(Matrix2::identity() * 2.0, 1.0).unwrap();
        assert_abs_diff_eq!(cost_functional(&offset, &d, &doubled_q), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ff_exact_tracking_across_regimes() {
        // Integrating under the feedforward force from the on-orbit initial
        // point keeps the solution on the orbit; deviation is integrator
        // error. Amplitude 1 is excluded: there the tracking dynamics are
        // genuinely unstable and the orbit is not recovered.
        let cfg = IntegratorConfig::default();
        for (m, l) in [(1.0, 3.0), (1.0, 9.0), (5.0, 5.0), (10.0, 5.0), (7.0, 9.0)] {
            let force = ff_force(mu(m), lam(l));
            let traj = integrate(mu(m), &force, State::new(0.0, l), &cfg).unwrap();
            let sup = traj
                .t
                .iter()
                .zip(&traj.x)
                .map(|(t, x)| (x - l * t.sin()).abs())
                .fold(0.0_f64, f64::max);
            assert!(sup < 1e-3, "sup error {sup} at mu={m}, lambda={l}");
        }
    }

    #[test]
    fn cost_weights_validation() {
        assert!(CostWeights::new(Matrix2::new(1.0, 0.5, 0.4, 1.0), 1.0).is_err());
        assert!(CostWeights::new(Matrix2::new(-1.0, 0.0, 0.0, 1.0), 1.0).is_err());
        assert!(CostWeights::new(Matrix2::identity(), 0.0).is_err());
        assert!(CostWeights::new(Matrix2::identity(), f64::NAN).is_err());
    }

    // Smoke test that the paper-sign feedback produces a bounded wrong orbit
    // rather than a blow-up: the state-feedback terms deepen the negative
    // damping, which the cubic nonlinearity saturates.
    #[test]
    fn paper_sign_feedback_is_bounded_but_off_target() {
        let model = linearize(mu(1.0));
        let sol = solve_are(&model, &CostWeights::default()).unwrap();
        let fb = fb_force(&sol, lam(5.0), FeedbackSignConvention::PaperAsWritten);
        let traj = integrate(mu(1.0), &fb, State::new(1.0, 0.0), &IntegratorConfig::default()).unwrap();
        let max_x = traj.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(max_x < 50.0, "feedback orbit escaped: {max_x}");
        let tail_err: f64 = traj
            .t
            .iter()
            .zip(&traj.x)
            .filter(|(t, _)| **t >= 25.0)
            .map(|(t, x)| (x - 5.0 * t.sin()).abs())
            .fold(0.0_f64, f64::max);
        assert!(tail_err > 1.0, "paper-sign feedback unexpectedly tracked the target");
    }
}
