//! `vdpctl` - run the controller comparison experiments from the shell.
//!
//! Verbs: `benchmark`, `sweep-lambda`, `sweep-mu`, `phase-field`, `tables`.
//! Each experiment cell writes `series.csv`, `manifest.toml` and
//! `record.toml` (plus `losses.csv`/`checkpoint.bin` for the trained
//! controller) under `out/<experiment>/<controller>/<cell-id>/`.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use vdpctl_core::harness::emit::{write_phase_field, GridSpec};
use vdpctl_core::harness::{
    self, tables, CellOutcome, ControllerKind, ExperimentConfig, ALL_CONTROLLERS,
    DESK_MAX_ITERATIONS, FULL_MAX_ITERATIONS,
};
use vdpctl_core::{FeedbackSignConvention, VdpParams};

#[derive(Parser)]
#[command(
    name = "vdpctl",
    version,
    about = "Benchmark workbench for trajectory control of the forced van der Pol oscillator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark cell (amplitude 5, damping gain 1) per controller.
    Benchmark(RunArgs),
    /// Sweep the desired amplitude over {1, 3, 5, 7, 9}.
    SweepLambda(RunArgs),
    /// Sweep the damping gain over {1, 3, 5, 7, 9, 10}.
    SweepMu(RunArgs),
    /// Emit the unforced phase-field arrows for quiver plotting.
    PhaseField(PhaseFieldArgs),
    /// Rebuild the comparison tables from records under the output dir.
    Tables(TablesArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Controllers to run (repeatable); default: all four.
    #[arg(long = "controller", value_name = "pidoc|ff|fb|combined")]
    controllers: Vec<String>,
    /// Desired trajectory amplitude.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Nonlinear damping gain.
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// RNG seed for the trained controller.
    #[arg(long)]
    seed: Option<u64>,
    /// Error-feedback sign convention.
    #[arg(long, value_name = "paper|standard")]
    sign: Option<String>,
    /// Iteration cap for the trained controller.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Restore the full-scale iteration cap (2e5) instead of desk scale.
    #[arg(long, conflicts_with = "max_iters")]
    full: bool,
    /// Output directory root.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// TOML experiment config; flags override file values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn build_config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => vdpctl_core::harness::emit::read_manifest(path)
                .with_context(|| format!("reading config {}", path.display()))?,
            None => ExperimentConfig {
                train: vdpctl_core::TrainConfig {
                    max_iterations: DESK_MAX_ITERATIONS,
                    ..Default::default()
                },
                ..Default::default()
            },
        };
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(m) = self.mu {
            cfg.mu = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(sign) = &self.sign {
            cfg.sign = sign.parse::<FeedbackSignConvention>()?;
        }
        if self.full {
            cfg.train.max_iterations = FULL_MAX_ITERATIONS;
        } else if let Some(n) = self.max_iters {
            cfg.train.max_iterations = n;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }

    fn controllers(&self) -> anyhow::Result<Vec<ControllerKind>> {
        if self.controllers.is_empty() {
            return Ok(ALL_CONTROLLERS.to_vec());
        }
        self.controllers
            .iter()
            .map(|s| s.parse::<ControllerKind>().map_err(Into::into))
            .collect()
    }
}

#[derive(Args)]
struct PhaseFieldArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    x_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    x_max: f64,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    v_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    v_max: f64,
    #[arg(long, default_value_t = 21)]
    nx: usize,
    #[arg(long, default_value_t = 21)]
    nv: usize,
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TablesArgs {
    /// Output directory root holding the run records.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

fn report(outcomes: &[CellOutcome]) -> anyhow::Result<()> {
    let mut failures = 0usize;
    for o in outcomes {
        match &o.result {
            Ok(rec) => {
                let rel = rec
                    .timing
                    .relative_time
                    .map(|r| format!("{r:.4}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "ok   {:<9} lam={:<4} mu={:<4} E={:.6}  wall={:.3}s  T={rel}  {}",
                    o.controller.to_string(),
                    o.lambda,
                    o.mu,
                    rec.error.mean_abs_rel_error,
                    rec.timing.wall_seconds,
                    o.cell_dir.display()
                );
            }
            Err(e) => {
                failures += 1;
                eprintln!(
                    "FAIL {:<9} lam={:<4} mu={:<4}: {e}",
                    o.controller.to_string(),
                    o.lambda,
                    o.mu
                );
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} cells failed", outcomes.len());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Benchmark(args) => {
            let cfg = args.build_config()?;
            let outcomes = harness::run_benchmark(&cfg, &args.controllers()?);
            report(&outcomes)
        }
        Command::SweepLambda(args) => {
            let cfg = args.build_config()?;
            let outcomes = harness::run_lambda_sweep(&cfg, &args.controllers()?);
            report(&outcomes)
        }
        Command::SweepMu(args) => {
            let cfg = args.build_config()?;
            let outcomes = harness::run_mu_sweep(&cfg, &args.controllers()?);
            report(&outcomes)
        }
        Command::PhaseField(args) => {
            let params = VdpParams::new(args.mu)?;
            let grid = GridSpec {
                x_min: args.x_min,
                x_max: args.x_max,
                v_min: args.v_min,
                v_max: args.v_max,
                nx: args.nx,
                nv: args.nv,
            };
            std::fs::create_dir_all(&args.out)?;
            let path = args.out.join("phase_field.csv");
            write_phase_field(&path, params, &grid)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Tables(args) => {
            let records = harness::collect_records(&args.out)?;
            if records.is_empty() {
                bail!("no record.toml files under {}", args.out.display());
            }
            let written = tables::emit_tables(&records, &args.out.join("tables"))?;
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
