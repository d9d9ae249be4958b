//! Adaptive Dormand-Prince 5(4) integration of the (forced) van der Pol
//! system with dense output on a uniform grid.
//!
//! The embedded pair controls the local error per step to
//! `atol + rtol * |y|`; accepted steps carry a 4th-order-accurate
//! interpolant from which the uniform output grid is sampled, endpoints
//! included. The solver is explicit: the dynamics are non-stiff for the
//! damping gains used here, and runaway stiffness is guarded by the step
//! budget.

use serde::{Deserialize, Serialize};

use crate::dynamics::{rhs_raw, Force, State, VdpParams};
use crate::error::{Error, Result};

/// Tolerances, time span and output grid for one integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub t_span: [f64; 2],
    pub n_output: usize,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-10,
            t_span: [0.0, 50.0],
            n_output: 5000,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let [t0, t1] = self.t_span;
        if !(self.rtol > 0.0 && self.rtol.is_finite()) {
            return Err(Error::InvalidConfig(format!("rtol must be > 0, got {}", self.rtol)));
        }
        if !(self.atol > 0.0 && self.atol.is_finite()) {
            return Err(Error::InvalidConfig(format!("atol must be > 0, got {}", self.atol)));
        }
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::InvalidConfig(format!("t_span must satisfy t1 > t0, got [{t0}, {t1}]")));
        }
        if self.n_output < 2 {
            return Err(Error::InvalidConfig(format!("n_output must be >= 2, got {}", self.n_output)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// The uniform output grid, including both endpoints.
    pub fn grid(&self) -> Vec<f64> {
        let [t0, t1] = self.t_span;
        let n = self.n_output;
        let dt = (t1 - t0) / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { t1 } else { t0 + i as f64 * dt })
            .collect()
    }
}

/// Sampled solution on the uniform output grid.
///
/// Accelerations are recomputed from the vector field at each sample (not
/// finite-differenced), so second-order phase portraits are exact with
/// respect to the model. `f` records the applied force at each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub f: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, i: usize) -> State {
        State::new(self.x[i], self.v[i])
    }
}

// Dormand-Prince 5(4) tableau (Hairer, Norsett & Wanner DOPRI5).
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights coincide with the last A row (FSAL).
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.2; // max step shrink per step
const FAC_MAX: f64 = 10.0; // max step growth per step
const BETA: f64 = 0.04; // PI stabilization

type Vec2 = [f64; 2];

#[inline]
fn axpy(y: Vec2, h: f64, terms: &[(f64, Vec2)]) -> Vec2 {
    let mut out = y;
    for &(c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

fn hinit<F: FnMut(f64, Vec2) -> Vec2>(
    field: &mut F,
    t0: f64,
    t_end: f64,
    y0: Vec2,
    f0: Vec2,
    rtol: f64,
    atol: f64,
) -> f64 {
    let sk = [atol + rtol * y0[0].abs(), atol + rtol * y0[1].abs()];
    let d0 = ((y0[0] / sk[0]).powi(2) + (y0[1] / sk[1]).powi(2)).sqrt() / std::f64::consts::SQRT_2;
    let d1 = ((f0[0] / sk[0]).powi(2) + (f0[1] / sk[1]).powi(2)).sqrt() / std::f64::consts::SQRT_2;
    let mut h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * (d0 / d1)
    };
    h = h.min(t_end - t0);
    let y1 = [y0[0] + h * f0[0], y0[1] + h * f0[1]];
    let f1 = field(t0 + h, y1);
    let d2 = (((f1[0] - f0[0]) / sk[0]).powi(2) + ((f1[1] - f0[1]) / sk[1]).powi(2)).sqrt()
        / std::f64::consts::SQRT_2
        / h;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h).min(h1).min(t_end - t0)
}

/// Integrate a generic second-order-in-disguise system `y' = field(t, y)`
/// over `cfg.t_span`, sampling the dense interpolant on the uniform output
/// grid. Returns `(grid times, states)`.
///
/// This is the raw engine behind [`integrate`]; tests use it directly with
/// pure-linear vector fields.
pub fn solve_dense<F>(mut field: F, y0: Vec2, cfg: &IntegratorConfig) -> Result<(Vec<f64>, Vec<Vec2>)>
where
    F: FnMut(f64, Vec2) -> Vec2,
{
    cfg.validate()?;
    let [t0, t_end] = cfg.t_span;
    if !(y0[0].is_finite() && y0[1].is_finite()) {
        return Err(Error::InvalidState {
            t: t0,
            x: y0[0],
            v: y0[1],
        });
    }

    let grid = cfg.grid();
    let mut out: Vec<Vec2> = Vec::with_capacity(grid.len());
    out.push(y0);
    let mut next_out = 1usize;

    let mut t = t0;
    let mut y = y0;
    let mut k1 = field(t, y);
    let mut h = hinit(&mut field, t0, t_end, y0, k1, cfg.rtol, cfg.atol);
    let expo1 = 0.2 - BETA * 0.75;
    let mut facold = 1e-4_f64;
    let mut last_rejected = false;
    let mut steps = 0usize;

    while next_out < grid.len() {
        if steps >= cfg.max_steps {
            return Err(Error::StepBudget {
                t,
                max_steps: cfg.max_steps,
            });
        }
        steps += 1;

        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::BlowUp { t });
        }
        let mut last = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            last = true;
        }

        // Stages 2..7; stage 7 evaluates the 5th-order solution (FSAL).
        let k2 = field(t + C[1] * h, axpy(y, h, &[(A[1][0], k1)]));
        let k3 = field(t + C[2] * h, axpy(y, h, &[(A[2][0], k1), (A[2][1], k2)]));
        let k4 = field(
            t + C[3] * h,
            axpy(y, h, &[(A[3][0], k1), (A[3][1], k2), (A[3][2], k3)]),
        );
        let k5 = field(
            t + C[4] * h,
            axpy(
                y,
                h,
                &[(A[4][0], k1), (A[4][1], k2), (A[4][2], k3), (A[4][3], k4)],
            ),
        );
        let k6 = field(
            t + C[5] * h,
            axpy(
                y,
                h,
                &[
                    (A[5][0], k1),
                    (A[5][1], k2),
                    (A[5][2], k3),
                    (A[5][3], k4),
                    (A[5][4], k5),
                ],
            ),
        );
        let y_new = axpy(
            y,
            h,
            &[
                (A[6][0], k1),
                (A[6][2], k3),
                (A[6][3], k4),
                (A[6][4], k5),
                (A[6][5], k6),
            ],
        );
        let k7 = field(t + h, y_new);

        // Scaled RMS error of the embedded 4th-order difference.
        let mut err = 0.0;
        for i in 0..2 {
            let sk = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
            let e = h
                * (E[0] * k1[i]
                    + E[2] * k3[i]
                    + E[3] * k4[i]
                    + E[4] * k5[i]
                    + E[5] * k6[i]
                    + E[6] * k7[i]);
            err += (e / sk) * (e / sk);
        }
        err = (err / 2.0).sqrt();

        if !err.is_finite() {
            // A stage overflowed; retry with a much smaller step.
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            // Accept.
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = err.max(1e-4);
            let mut h_new = h / fac;

            // Dense-output coefficients for this step.
            let mut cont = [[0.0_f64; 2]; 5];
            for i in 0..2 {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0][i] = y[i];
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - h * k7[i] - bspl;
                cont[4][i] = h
                    * (D[0] * k1[i]
                        + D[2] * k3[i]
                        + D[3] * k4[i]
                        + D[4] * k5[i]
                        + D[5] * k6[i]
                        + D[6] * k7[i]);
            }
            let t_new = t + h;
            while next_out < grid.len() && grid[next_out] <= t_new + 1e-14 * t_new.abs().max(1.0) {
                let tg = grid[next_out];
                if next_out == grid.len() - 1 && last {
                    out.push(y_new);
                } else {
                    let s = ((tg - t) / h).clamp(0.0, 1.0);
                    let s1 = 1.0 - s;
                    let mut yi = [0.0; 2];
                    for i in 0..2 {
                        yi[i] = cont[0][i]
                            + s * (cont[1][i]
                                + s1 * (cont[2][i] + s * (cont[3][i] + s1 * cont[4][i])));
                    }
                    out.push(yi);
                }
                next_out += 1;
            }

            t = t_new;
            y = y_new;
            k1 = k7;
            if !(y[0].is_finite() && y[1].is_finite()) {
                return Err(Error::BlowUp { t });
            }
            if last_rejected {
                h_new = h_new.min(h);
                last_rejected = false;
            }
            h = h_new;
        } else {
            // Reject and shrink.
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }

    Ok((grid, out))
}

/// Integrate the forced van der Pol system and sample it, with acceleration
/// and applied force recorded at every output point.
pub fn integrate(
    params: VdpParams,
    force: &(impl Force + ?Sized),
    init: State,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mu = params.mu();
    let field = |t: f64, y: Vec2| -> Vec2 {
        let f = force.eval(t, State::new(y[0], y[1]));
        let (dx, dv) = rhs_raw(mu, y[0], y[1], f);
        [dx, dv]
    };
    let (t, states) = solve_dense(field, [init.x, init.v], cfg)?;

    let n = t.len();
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for (ti, yi) in t.iter().zip(&states) {
        let fi = force.eval(*ti, State::new(yi[0], yi[1]));
        let (_, dv) = rhs_raw(mu, yi[0], yi[1], fi);
        x.push(yi[0]);
        v.push(yi[1]);
        a.push(dv);
        f.push(fi);
    }
    Ok(Trajectory { t, x, v, a, f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ZeroForce;
    use approx::assert_abs_diff_eq;

    fn mu1() -> VdpParams {
        VdpParams::new(1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        let ok = IntegratorConfig::default();
        assert!(ok.validate().is_ok());
        assert!(IntegratorConfig { rtol: 0.0, ..ok }.validate().is_err());
        assert!(IntegratorConfig { atol: -1.0, ..ok }.validate().is_err());
        assert!(IntegratorConfig { t_span: [1.0, 1.0], ..ok }.validate().is_err());
        assert!(IntegratorConfig { n_output: 1, ..ok }.validate().is_err());
        assert!(IntegratorConfig { max_steps: 0, ..ok }.validate().is_err());
    }

    #[test]
    fn harmonic_oscillator_closes_after_one_period() {
        // Pure-linear test vector field: x'' = -x, exact solution cos t.
        let cfg = IntegratorConfig {
            t_span: [0.0, 2.0 * std::f64::consts::PI],
            n_output: 100,
            ..Default::default()
        };
        let (t, y) = solve_dense(|_t, y| [y[1], -y[0]], [1.0, 0.0], &cfg).unwrap();
        assert_eq!(t.len(), 100);
        let last = y.last().unwrap();
        assert_abs_diff_eq!(last[0], 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(last[1], 0.0, epsilon = 1e-5);
        // Dense samples follow cos t as well.
        for (ti, yi) in t.iter().zip(&y) {
            assert_abs_diff_eq!(yi[0], ti.cos(), epsilon = 1e-5);
        }
    }

    #[test]
    fn unforced_limit_cycle_amplitude() {
        let traj = integrate(mu1(), &ZeroForce, State::new(1.0, 0.0), &IntegratorConfig::default()).unwrap();
        assert_eq!(traj.len(), 5000);
        assert_eq!(traj.t[0], 0.0);
        assert_eq!(*traj.t.last().unwrap(), 50.0);
        let max_x = traj
            .t
            .iter()
            .zip(&traj.x)
            .filter(|(t, _)| **t >= 30.0)
            .map(|(_, x)| x.abs())
            .fold(0.0_f64, f64::max);
        assert!(
            (2.0..=2.02).contains(&max_x),
            "limit-cycle amplitude {max_x} outside [2.0, 2.02]"
        );
    }

    #[test]
    fn feedforward_tracks_desired_orbit() {
        // Forcing the system with the ideal feedforward signal for amplitude 5
        // makes x(t) = 5 sin t an exact solution; deviation is integrator error.
        let lam = 5.0;
        let force = move |t: f64, _s: State| -> f64 {
            -1.0 * lam * t.cos() * (1.0 - lam * lam * t.sin() * t.sin())
        };
        let traj = integrate(mu1(), &force, State::new(0.0, lam), &IntegratorConfig::default()).unwrap();
        let sup = traj
            .t
            .iter()
            .zip(&traj.x)
            .map(|(t, x)| (x - lam * t.sin()).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 1e-3, "sup |x - 5 sin t| = {sup}");
    }

    #[test]
    fn acceleration_column_matches_vector_field() {
        let traj = integrate(mu1(), &ZeroForce, State::new(1.0, 0.0), &IntegratorConfig::default()).unwrap();
        for i in [0, 1, 777, 4999] {
            let (_, dv) = crate::dynamics::rhs(mu1(), traj.state(i), traj.f[i]).unwrap();
            assert_eq!(traj.a[i], dv);
        }
    }

    #[test]
    fn dense_output_consistency() {
        // Re-integrating between consecutive dense samples reproduces the
        // next sample within 10 * (atol + rtol |y|), |y| the state norm.
        let cfg = IntegratorConfig::default();
        let traj = integrate(mu1(), &ZeroForce, State::new(1.0, 0.0), &cfg).unwrap();
        for i in 0..traj.len() - 1 {
            let local = IntegratorConfig {
                t_span: [traj.t[i], traj.t[i + 1]],
                n_output: 2,
                ..cfg
            };
            let sub = integrate(mu1(), &ZeroForce, traj.state(i), &local).unwrap();
            let y_norm = (traj.x[i + 1].powi(2) + traj.v[i + 1].powi(2)).sqrt();
            let tol = 10.0 * (cfg.atol + cfg.rtol * y_norm);
            assert!(
                (sub.x[1] - traj.x[i + 1]).abs() <= tol,
                "x mismatch at sample {i}: {} vs {}",
                sub.x[1],
                traj.x[i + 1]
            );
            assert!(
                (sub.v[1] - traj.v[i + 1]).abs() <= tol,
                "v mismatch at sample {i}: {} vs {}",
                sub.v[1],
                traj.v[i + 1]
            );
        }
    }

    #[test]
    fn deterministic_bit_identical() {
        let a = integrate(mu1(), &ZeroForce, State::new(1.0, 0.0), &IntegratorConfig::default()).unwrap();
        let b = integrate(mu1(), &ZeroForce, State::new(1.0, 0.0), &IntegratorConfig::default()).unwrap();
        assert!(a
            .x
            .iter()
            .zip(&b.x)
            .all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a
            .v
            .iter()
            .zip(&b.v)
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn step_budget_error() {
        let cfg = IntegratorConfig {
            max_steps: 10,
            ..Default::default()
        };
        let err = integrate(mu1(), &ZeroForce, State::new(1.0, 0.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::StepBudget { max_steps: 10, .. }));
    }

    #[test]
    fn blow_up_reports_last_good_time() {
        // x' = x^2 from x(0) = 1 escapes to infinity at t = 1.
        let cfg = IntegratorConfig {
            t_span: [0.0, 2.0],
            n_output: 10,
            ..Default::default()
        };
        let err = solve_dense(|_t, y| [y[0] * y[0], 0.0], [1.0, 0.0], &cfg).unwrap_err();
        match err {
            Error::BlowUp { t } => assert!((0.9..1.05).contains(&t), "blow-up time {t}"),
            other => panic!("expected BlowUp, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_init_rejected() {
        let err = integrate(
            mu1(),
            &ZeroForce,
            State::new(f64::NAN, 0.0),
            &IntegratorConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidState { .. }));
    }
}
