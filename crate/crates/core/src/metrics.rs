//! Tracking-error and timing metrics used by the comparison tables.

use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::dynamics::DesiredTrajectory;
use crate::error::{Error, Result};
use crate::integrator::Trajectory;

/// Mean absolute relative tracking error over the post-transient window.
///
/// Samples where the desired position is within the zero guard are excluded
/// rather than clamped; `n_excluded` discloses how many.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mean_abs_rel_error: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    pub transient_cutoff: f64,
}

/// `E = (1/M) sum |x - xd| / |xd|` over samples with `t >= transient_cutoff`
/// and `|xd| > guard`.
pub fn rel_error(
    traj: &Trajectory,
    desired: &DesiredTrajectory,
    transient_cutoff: f64,
    guard: f64,
) -> Result<ErrorReport> {
    if traj.is_empty() {
        return Err(Error::InvalidConfig("empty trajectory".into()));
    }
    let t_last = *traj.t.last().unwrap();
    if !(transient_cutoff >= traj.t[0] && transient_cutoff <= t_last) {
        return Err(Error::InvalidConfig(format!(
            "transient cutoff {transient_cutoff} outside trajectory span [{}, {t_last}]",
            traj.t[0]
        )));
    }
    if !(guard >= 0.0) {
        return Err(Error::InvalidConfig(format!("guard must be >= 0, got {guard}")));
    }

    let mut sum = 0.0;
    let mut n_used = 0usize;
    let mut n_excluded = 0usize;
    for (i, &t) in traj.t.iter().enumerate() {
        if t < transient_cutoff {
            continue;
        }
        let (xd, _, _) = desired.eval(t);
        if xd.abs() > guard {
            sum += (traj.x[i] - xd).abs() / xd.abs();
            n_used += 1;
        } else {
            n_excluded += 1;
        }
    }
    if n_used == 0 {
        return Err(Error::UndefinedMetric { n_excluded });
    }
    Ok(ErrorReport {
        mean_abs_rel_error: sum / n_used as f64,
        n_used,
        n_excluded,
        transient_cutoff,
    })
}

/// Wall time of one run and its time relative to the feedforward run of the
/// same sweep cell. `relative_time` is `None` until a batch runner has a
/// feedforward reference to normalize against; feedforward's own value is
/// 1 by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub wall_seconds: f64,
    pub relative_time: Option<f64>,
}

/// Run `work` and measure it on the monotonic clock. The caller decides what
/// belongs inside: control computation only, never file emission.
pub fn timing_capture<T>(work: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = work();
    let wall = start.elapsed().as_secs_f64().max(1e-9);
    (out, wall)
}
