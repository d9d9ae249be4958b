//! File emission and loading: series CSV, loss CSV, phase-field CSV, TOML
//! manifests and run records.
//!
//! Series files carry 17 significant digits so external plotting and diffing
//! round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dynamics::{DesiredTrajectory, VdpParams};
use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, RunRecord};
use crate::integrator::Trajectory;
use crate::pinn::LossBreakdown;

pub const SERIES_HEADER: &str = "t,x,v,a,F,xd,vd,ad";
pub const FIELD_HEADER: &str = "x,v,dx,dv";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write one controller's sampled run: trajectory columns plus the desired
/// trajectory evaluated on the same grid.
pub fn write_series(path: &Path, traj: &Trajectory, desired: &DesiredTrajectory) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SERIES_HEADER}")?;
    for i in 0..traj.len() {
        let (xd, vd, ad) = desired.eval(traj.t[i]);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt(traj.t[i]),
            fmt(traj.x[i]),
            fmt(traj.v[i]),
            fmt(traj.a[i]),
            fmt(traj.f[i]),
            fmt(xd),
            fmt(vd),
            fmt(ad)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Read back a series file written by [`write_series`]; returns the
/// trajectory columns (the desired columns are recomputable).
pub fn read_series(path: &Path) -> Result<Trajectory> {
    let r = BufReader::new(File::open(path)?);
    let bad = |msg: &str| Error::Record {
        path: path.to_path_buf(),
        msg: msg.into(),
    };
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    if header.trim() != SERIES_HEADER {
        return Err(bad(&format!("unexpected header '{header}'")));
    }
    let mut traj = Trajectory {
        t: vec![],
        x: vec![],
        v: vec![],
        a: vec![],
        f: vec![],
    };
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad(&format!("expected 8 columns, got {}", cols.len())));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| bad(&format!("bad float '{s}': {e}")))
        };
        traj.t.push(parse(cols[0])?);
        traj.x.push(parse(cols[1])?);
        traj.v.push(parse(cols[2])?);
        traj.a.push(parse(cols[3])?);
        traj.f.push(parse(cols[4])?);
    }
    Ok(traj)
}

/// Write the loss history of a training run.
pub fn write_losses(path: &Path, history: &[(u64, LossBreakdown)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,mse_nn,mse_i,mse_d,total")?;
    for (iter, lb) in history {
        writeln!(
            w,
            "{iter},{},{},{},{}",
            fmt(lb.mse_nn),
            fmt(lb.mse_i),
            fmt(lb.mse_d),
            fmt(lb.total)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Rectangular grid over the phase plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub nx: usize,
    pub nv: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -3.0,
            x_max: 3.0,
            v_min: -3.0,
            v_max: 3.0,
            nx: 21,
            nv: 21,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_max > self.x_min && self.v_max > self.v_min) {
            return Err(Error::InvalidConfig("grid bounds must be increasing".into()));
        }
        if self.nx < 2 || self.nv < 2 {
            return Err(Error::InvalidConfig("grid needs at least 2 nodes per axis".into()));
        }
        Ok(())
    }
}

/// Unforced vector-field arrows on the grid, row per node, for external
/// quiver plotting.
pub fn phase_field(params: VdpParams, grid: &GridSpec) -> Result<Vec<[f64; 4]>> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.nx * grid.nv);
    for ix in 0..grid.nx {
        let x = grid.x_min + (grid.x_max - grid.x_min) * ix as f64 / (grid.nx - 1) as f64;
        for iv in 0..grid.nv {
            let v = grid.v_min + (grid.v_max - grid.v_min) * iv as f64 / (grid.nv - 1) as f64;
            let (dx, dv) = crate::dynamics::rhs_raw(params.mu(), x, v, 0.0);
            rows.push([x, v, dx, dv]);
        }
    }
    Ok(rows)
}

/// Emit the phase field as CSV with header `x,v,dx,dv`.
pub fn write_phase_field(path: &Path, params: VdpParams, grid: &GridSpec) -> Result<()> {
    let rows = phase_field(params, grid)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{FIELD_HEADER}")?;
    for row in rows {
        writeln!(w, "{},{},{},{}", fmt(row[0]), fmt(row[1]), fmt(row[2]), fmt(row[3]))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(path: &Path, config: &ExperimentConfig) -> Result<()> {
    let text = toml::to_string_pretty(config).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        msg: format!("serialize: {e}"),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        msg: format!("parse: {e}"),
    })
}

pub fn write_record(path: &Path, record: &RunRecord) -> Result<()> {
    let text = toml::to_string_pretty(record).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        msg: format!("serialize: {e}"),
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_record(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Record {
        path: path.to_path_buf(),
        msg: format!("parse: {e}"),
    })
}
