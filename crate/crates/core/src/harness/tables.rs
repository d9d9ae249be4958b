//! Aggregate comparison tables over persisted run records.
//!
//! Four files, rows/columns in the layout of the timing, relative-time and
//! relative-error comparisons:
//!
//! * `timing_by_lambda.csv` - wall seconds, controllers x amplitudes (at the
//!   benchmark damping gain)
//! * `timing_by_mu.csv` - wall seconds, controllers x damping gains (at the
//!   benchmark amplitude)
//! * `relative_time.csv` - time relative to feedforward per sweep cell
//! * `relative_error.csv` - mean absolute relative tracking error per cell
//!
//! Cells without a record are written as `NA` so partial sweeps stay usable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::{ControllerKind, RunRecord, LAMBDA_SWEEP, MU_SWEEP};

const BENCH_MU: f64 = 1.0;
const BENCH_LAMBDA: f64 = 5.0;

fn find<'a>(
    records: &'a [RunRecord],
    controller: ControllerKind,
    lambda: f64,
    mu: f64,
) -> Option<&'a RunRecord> {
    records
        .iter()
        .find(|r| r.config.controller == controller && r.config.lambda == lambda && r.config.mu == mu)
}

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => "NA".to_string(),
    }
}

fn write_timing_table(
    path: &Path,
    records: &[RunRecord],
    header: &str,
    cells: &[(f64, f64)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for c in crate::harness::ALL_CONTROLLERS {
        let mut row = vec![c.to_string()];
        for &(lambda, mu) in cells {
            row.push(fmt_cell(find(records, c, lambda, mu).map(|r| r.timing.wall_seconds)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn sweep_rows() -> Vec<(String, f64, f64)> {
    let mut rows = Vec::new();
    for &l in &LAMBDA_SWEEP {
        rows.push((format!("lambda={l}"), l, BENCH_MU));
    }
    for &m in &MU_SWEEP {
        rows.push((format!("mu={m}"), BENCH_LAMBDA, m));
    }
    rows
}

fn write_cell_table(
    path: &Path,
    records: &[RunRecord],
    columns: &[ControllerKind],
    value: impl Fn(&RunRecord) -> Option<f64>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = std::iter::once("cell".to_string())
        .chain(columns.iter().map(|c| c.to_string()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (label, lambda, mu) in sweep_rows() {
        let mut row = vec![label];
        for &c in columns {
            row.push(fmt_cell(find(records, c, lambda, mu).and_then(&value)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Emit all four tables into `out`; returns the written paths.
pub fn emit_tables(records: &[RunRecord], out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let p = out.join("timing_by_lambda.csv");
    let lambda_cells: Vec<(f64, f64)> = LAMBDA_SWEEP.iter().map(|&l| (l, BENCH_MU)).collect();
    write_timing_table(
        &p,
        records,
        "controller,lambda=1,lambda=3,lambda=5,lambda=7,lambda=9",
        &lambda_cells,
    )?;
    written.push(p);

    let p = out.join("timing_by_mu.csv");
    let mu_cells: Vec<(f64, f64)> = MU_SWEEP.iter().map(|&m| (BENCH_LAMBDA, m)).collect();
    write_timing_table(
        &p,
        records,
        "controller,mu=1,mu=3,mu=5,mu=7,mu=9,mu=10",
        &mu_cells,
    )?;
    written.push(p);

    let p = out.join("relative_time.csv");
    write_cell_table(
        &p,
        records,
        &[
            ControllerKind::Pidoc,
            ControllerKind::Ff,
            ControllerKind::Fb,
            ControllerKind::Combined,
        ],
        |r| r.timing.relative_time,
    )?;
    written.push(p);

    let p = out.join("relative_error.csv");
    write_cell_table(
        &p,
        records,
        &[
            ControllerKind::Combined,
            ControllerKind::Ff,
            ControllerKind::Fb,
            ControllerKind::Pidoc,
        ],
        |r| Some(r.error.mean_abs_rel_error),
    )?;
    written.push(p);

    Ok(written)
}
