//! Experiment runner: the benchmark cell, amplitude and nonlinearity sweeps,
//! persisted run records and plot-ready data files.
//!
//! Output tree: `out/<experiment>/<controller>/<cell-id>/` holding
//! `series.csv`, `manifest.toml`, `record.toml`, and for the trained
//! controller `losses.csv` and `checkpoint.bin`. Cells run sequentially so
//! recorded wall times are uncontended.

pub mod emit;
pub mod tables;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controllers::{
    combined_force, fb_force, ff_force, linearize, solve_are, CostWeights, FeedbackSignConvention,
};
use crate::dynamics::{DesiredTrajectory, State, VdpParams};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig, Trajectory};
use crate::metrics::{rel_error, timing_capture, ErrorReport, TimingRecord};
use crate::pinn::{pidoc_control, Checkpoint, TrainConfig};

/// Desk-scale iteration cap for trained cells; the full-scale cap is
/// restored by the CLI's `--full`.
pub const DESK_MAX_ITERATIONS: usize = 5000;
/// Full-scale iteration cap.
pub const FULL_MAX_ITERATIONS: usize = 200_000;

/// Amplitudes of the amplitude sweep.
pub const LAMBDA_SWEEP: [f64; 5] = [1.0, 3.0, 5.0, 7.0, 9.0];
/// Damping gains of the nonlinearity sweep.
pub const MU_SWEEP: [f64; 6] = [1.0, 3.0, 5.0, 7.0, 9.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pidoc,
    Ff,
    Fb,
    Combined,
}

pub const ALL_CONTROLLERS: [ControllerKind; 4] = [
    ControllerKind::Pidoc,
    ControllerKind::Ff,
    ControllerKind::Fb,
    ControllerKind::Combined,
];

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Pidoc => "pidoc",
            Self::Ff => "ff",
            Self::Fb => "fb",
            Self::Combined => "combined",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pidoc" => Ok(Self::Pidoc),
            "ff" => Ok(Self::Ff),
            "fb" => Ok(Self::Fb),
            "combined" => Ok(Self::Combined),
            other => Err(Error::InvalidConfig(format!(
                "unknown controller '{other}' (expected pidoc|ff|fb|combined)"
            ))),
        }
    }
}

/// One sweep cell, fully resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub controller: ControllerKind,
    pub lambda: f64,
    pub mu: f64,
    pub sign: FeedbackSignConvention,
    /// State-error weight, row-major.
    pub q: [[f64; 2]; 2],
    /// Input weight.
    pub r: f64,
    /// Initial state of the controlled run.
    pub init: [f64; 2],
    /// Start of the error-evaluation window.
    pub transient_cutoff: f64,
    /// Zero guard as a fraction of the amplitude.
    pub guard_rel: f64,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    /// The benchmark cell: amplitude 5, damping gain 1, unit weights,
    /// init (1, 0), desk-scale training budget.
    fn default() -> Self {
        Self {
            controller: ControllerKind::Ff,
            lambda: 5.0,
            mu: 1.0,
            sign: FeedbackSignConvention::default(),
            q: [[1.0, 0.0], [0.0, 1.0]],
            r: 1.0,
            init: [1.0, 0.0],
            transient_cutoff: 25.0,
            guard_rel: 1e-3,
            seed: 0,
            integrator: IntegratorConfig::default(),
            train: TrainConfig {
                max_iterations: DESK_MAX_ITERATIONS,
                ..Default::default()
            },
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidConfig(format!("mu must be > 0, got {}", self.mu)));
        }
        if !(self.guard_rel >= 0.0) {
            return Err(Error::InvalidConfig("guard_rel must be >= 0".into()));
        }
        self.weights()?;
        self.integrator.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Copy the experiment seed into the training config so one field
    /// controls the whole cell.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.train.seed = c.seed;
        c
    }

    pub fn weights(&self) -> Result<CostWeights> {
        CostWeights::new(
            nalgebra::Matrix2::new(self.q[0][0], self.q[0][1], self.q[1][0], self.q[1][1]),
            self.r,
        )
    }

    pub fn desired(&self) -> Result<DesiredTrajectory> {
        DesiredTrajectory::new(self.lambda)
    }

    pub fn params(&self) -> Result<VdpParams> {
        VdpParams::new(self.mu)
    }

    pub fn cell_id(&self) -> String {
        format!("lam{}_mu{}", fmt_num(self.lambda), fmt_num(self.mu))
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Persisted outcome of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    /// Path of the series file, relative to the cell directory.
    pub series_file: String,
    pub losses_file: Option<String>,
    pub checkpoint_file: Option<String>,
    pub error: ErrorReport,
    pub timing: TimingRecord,
    /// Optimizer degraded-convergence flag (trained cells only).
    pub degraded_convergence: Option<bool>,
    pub software_version: String,
    pub timestamp: String,
}

/// One executed (or failed) cell of a batch.
#[derive(Debug)]
pub struct CellOutcome {
    pub controller: ControllerKind,
    pub lambda: f64,
    pub mu: f64,
    pub cell_dir: PathBuf,
    pub result: std::result::Result<RunRecord, String>,
}

pub fn cell_dir(base: &ExperimentConfig, experiment: &str) -> PathBuf {
    base.out_dir
        .join(experiment)
        .join(base.controller.to_string())
        .join(base.cell_id())
}

/// Execute one cell: run the controller, score it, persist series, manifest
/// and record. Timing covers the control computation only (for the trained
/// controller, training plus trajectory emission), never file writing.
pub fn run_cell(cfg: &ExperimentConfig, experiment: &str) -> Result<RunRecord> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let params = cfg.params()?;
    let desired = cfg.desired()?;
    let init = State::new(cfg.init[0], cfg.init[1]);
    let dir = cell_dir(&cfg, experiment);
    std::fs::create_dir_all(&dir)?;

    let mut losses_file = None;
    let mut checkpoint_file = None;
    let mut degraded = None;

    let (trajectory, wall): (Trajectory, f64) = match cfg.controller {
        ControllerKind::Ff => {
            let law = ff_force(params, desired);
            let (traj, wall) = timing_capture(|| integrate(params, &law, init, &cfg.integrator));
            (traj?, wall)
        }
        ControllerKind::Fb => {
            let sol = solve_are(&linearize(params), &cfg.weights()?)?;
            let law = fb_force(&sol, desired, cfg.sign);
            let (traj, wall) = timing_capture(|| integrate(params, &law, init, &cfg.integrator));
            (traj?, wall)
        }
        ControllerKind::Combined => {
            let sol = solve_are(&linearize(params), &cfg.weights()?)?;
            let law = combined_force(ff_force(params, desired), fb_force(&sol, desired, cfg.sign));
            let (traj, wall) = timing_capture(|| integrate(params, &law, init, &cfg.integrator));
            (traj?, wall)
        }
        ControllerKind::Pidoc => {
            let (run, wall) =
                timing_capture(|| pidoc_control(params, &desired, &cfg.train, &cfg.integrator));
            let run = run?;
            let lpath = dir.join("losses.csv");
            emit::write_losses(&lpath, &run.history)?;
            losses_file = Some("losses.csv".to_string());
            let cpath = dir.join("checkpoint.bin");
            Checkpoint::from_params(&run.params, cfg.train.seed, run.history.clone()).save(&cpath)?;
            checkpoint_file = Some("checkpoint.bin".to_string());
            degraded = Some(run.degraded);
            (run.trajectory, wall)
        }
    };

    let error = rel_error(
        &trajectory,
        &desired,
        cfg.transient_cutoff,
        cfg.guard_rel * cfg.lambda,
    )?;

    emit::write_series(&dir.join("series.csv"), &trajectory, &desired)?;
    emit::write_manifest(&dir.join("manifest.toml"), &cfg)?;

    let record = RunRecord {
        config: cfg.clone(),
        series_file: "series.csv".to_string(),
        losses_file,
        checkpoint_file,
        error,
        timing: TimingRecord {
            wall_seconds: wall,
            relative_time: if cfg.controller == ControllerKind::Ff {
                Some(1.0)
            } else {
                None
            },
        },
        degraded_convergence: degraded,
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
    };
    emit::write_record(&dir.join("record.toml"), &record)?;
    Ok(record)
}

fn run_batch_cell(cfg: &ExperimentConfig, experiment: &str) -> CellOutcome {
    CellOutcome {
        controller: cfg.controller,
        lambda: cfg.lambda,
        mu: cfg.mu,
        cell_dir: cell_dir(cfg, experiment),
        result: run_cell(cfg, experiment).map_err(|e| e.to_string()),
    }
}

/// Normalize wall times against the feedforward run of the same `(lambda,
/// mu)` cell group and rewrite the affected records.
pub fn finalize_relative_times(outcomes: &mut [CellOutcome]) -> Result<()> {
    let mut refs: Vec<(u64, u64, f64)> = Vec::new();
    for o in outcomes.iter() {
        if o.controller == ControllerKind::Ff {
            if let Ok(rec) = &o.result {
                refs.push((o.lambda.to_bits(), o.mu.to_bits(), rec.timing.wall_seconds));
            }
        }
    }
    for o in outcomes.iter_mut() {
        let key = (o.lambda.to_bits(), o.mu.to_bits());
        let ff_wall = refs
            .iter()
            .find(|(l, m, _)| (*l, *m) == key)
            .map(|(_, _, w)| *w);
        if let (Ok(rec), Some(ff_wall)) = (&mut o.result, ff_wall) {
            rec.timing.relative_time = Some(rec.timing.wall_seconds / ff_wall);
            emit::write_record(&o.cell_dir.join("record.toml"), rec)?;
        }
    }
    Ok(())
}

/// Run the benchmark cell for every requested controller.
pub fn run_benchmark(base: &ExperimentConfig, controllers: &[ControllerKind]) -> Vec<CellOutcome> {
    let mut outcomes = Vec::new();
    for &c in controllers {
        let cfg = ExperimentConfig {
            controller: c,
            ..base.clone()
        };
        outcomes.push(run_batch_cell(&cfg, "benchmark"));
    }
    let _ = finalize_relative_times(&mut outcomes);
    outcomes
}

fn run_sweep(
    base: &ExperimentConfig,
    controllers: &[ControllerKind],
    experiment: &str,
    cells: &[(f64, f64)],
) -> Vec<CellOutcome> {
    let mut outcomes = Vec::new();
    for &(lambda, mu) in cells {
        for &c in controllers {
            let cfg = ExperimentConfig {
                controller: c,
                lambda,
                mu,
                ..base.clone()
            };
            outcomes.push(run_batch_cell(&cfg, experiment));
        }
    }
    let _ = finalize_relative_times(&mut outcomes);
    // Aggregate tables over everything recorded under the output root so a
    // completed pair of sweeps yields the full comparison layout.
    if let Ok(records) = collect_records(&base.out_dir) {
        let _ = tables::emit_tables(&records, &base.out_dir.join("tables"));
    }
    outcomes
}

/// Amplitude sweep at the benchmark damping gain.
pub fn run_lambda_sweep(
    base: &ExperimentConfig,
    controllers: &[ControllerKind],
) -> Vec<CellOutcome> {
    let cells: Vec<(f64, f64)> = LAMBDA_SWEEP.iter().map(|&l| (l, base.mu)).collect();
    run_sweep(base, controllers, "sweep-lambda", &cells)
}

/// Nonlinearity sweep at the benchmark amplitude.
pub fn run_mu_sweep(base: &ExperimentConfig, controllers: &[ControllerKind]) -> Vec<CellOutcome> {
    let cells: Vec<(f64, f64)> = MU_SWEEP.iter().map(|&m| (base.lambda, m)).collect();
    run_sweep(base, controllers, "sweep-mu", &cells)
}

/// Recursively load every `record.toml` under `root`.
pub fn collect_records(root: &Path) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = match std::fs::read_dir(&dir) {
            Ok(e) => e,
            Err(_) => continue,
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "record.toml") {
                records.push(emit::read_record(&path)?);
            }
        }
    }
    records.sort_by(|a, b| {
        (a.config.controller.to_string(), a.config.lambda, a.config.mu)
            .partial_cmp(&(b.config.controller.to_string(), b.config.lambda, b.config.mu))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            out_dir: dir.to_path_buf(),
            integrator: IntegratorConfig {
                n_output: 400,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn cell_ids_are_compact() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.cell_id(), "lam5_mu1");
        cfg.lambda = 0.5;
        cfg.mu = 10.0;
        assert_eq!(cfg.cell_id(), "lam0.5_mu10");
    }

    #[test]
    fn ff_cell_runs_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base(dir.path());
        let rec = run_cell(&cfg, "benchmark").unwrap();
        assert_eq!(rec.timing.relative_time, Some(1.0));
        assert!(rec.error.mean_abs_rel_error < 0.05);
        let cell = cell_dir(&cfg.resolved(), "benchmark");
        assert!(cell.join("series.csv").exists());
        assert!(cell.join("manifest.toml").exists());

        // Record round-trips field-for-field.
        let back = emit::read_record(&cell.join("record.toml")).unwrap();
        assert_eq!(back, rec);
        // Manifest round-trips and rerunning from it reproduces the series
        // bit-for-bit.
        let loaded = emit::read_manifest(&cell.join("manifest.toml")).unwrap();
        assert_eq!(loaded, cfg.resolved());
        let dir2 = tempfile::tempdir().unwrap();
        let mut again = loaded;
        again.out_dir = dir2.path().to_path_buf();
        run_cell(&again, "benchmark").unwrap();
        let s1 = std::fs::read(cell.join("series.csv")).unwrap();
        let s2 = std::fs::read(cell_dir(&again.resolved(), "benchmark").join("series.csv")).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn benchmark_batch_normalizes_relative_time() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base(dir.path());
        let outcomes = run_benchmark(
            &cfg,
            &[ControllerKind::Ff, ControllerKind::Fb, ControllerKind::Combined],
        );
        assert_eq!(outcomes.len(), 3);
        for o in &outcomes {
            let rec = o.result.as_ref().unwrap();
            let rel = rec.timing.relative_time.unwrap();
            if o.controller == ControllerKind::Ff {
                assert_eq!(rel, 1.0);
            } else {
                assert!(rel > 0.0);
            }
            // Rewritten records carry the relative time.
            let on_disk = emit::read_record(&o.cell_dir.join("record.toml")).unwrap();
            assert_eq!(on_disk.timing.relative_time, Some(rel));
        }
        // The three trajectories share the identical time grid.
        let grids: Vec<Vec<f64>> = outcomes
            .iter()
            .map(|o| emit::read_series(&o.cell_dir.join("series.csv")).unwrap().t)
            .collect();
        assert!(grids.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sign_convention_propagates_to_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(dir.path());
        cfg.controller = ControllerKind::Fb;
        cfg.sign = FeedbackSignConvention::StandardTracking;
        let rec = run_cell(&cfg, "benchmark").unwrap();
        assert_eq!(rec.config.sign, FeedbackSignConvention::StandardTracking);
        let cell = cell_dir(&cfg.resolved(), "benchmark");
        let text = std::fs::read_to_string(cell.join("manifest.toml")).unwrap();
        assert!(text.contains("standard"));
    }

    #[test]
    fn pidoc_cell_emits_losses_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(dir.path());
        cfg.controller = ControllerKind::Pidoc;
        cfg.lambda = 1.0;
        cfg.train.max_iterations = 25;
        cfg.train.hidden_layers = 2;
        cfg.train.hidden_width = 8;
        cfg.integrator.n_output = 150;
        let rec = run_cell(&cfg, "benchmark").unwrap();
        assert_eq!(rec.losses_file.as_deref(), Some("losses.csv"));
        assert_eq!(rec.checkpoint_file.as_deref(), Some("checkpoint.bin"));
        assert!(rec.degraded_convergence.is_some());
        let cell = cell_dir(&cfg.resolved(), "benchmark");
        assert!(cell.join("losses.csv").exists());
        let ck = Checkpoint::load(&cell.join("checkpoint.bin")).unwrap();
        assert_eq!(ck.seed, cfg.seed);
        assert_eq!(ck.sizes, vec![1, 8, 8, 1]);
    }

    #[test]
    fn failed_cells_are_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = base(dir.path());
        // Unsatisfiable integration budget makes every cell fail.
        cfg.integrator.max_steps = 3;
        let outcomes = run_benchmark(&cfg, &[ControllerKind::Ff, ControllerKind::Fb]);
        assert_eq!(outcomes.len(), 2);
        for o in outcomes {
            assert!(o.result.is_err());
        }
    }

    #[test]
    fn collect_records_finds_all_cells() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = base(dir.path());
        run_benchmark(&cfg, &[ControllerKind::Ff, ControllerKind::Fb]);
        let records = collect_records(dir.path()).unwrap();
        assert_eq!(records.len(), 2);
    }
}
