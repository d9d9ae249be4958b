//! Self-describing binary checkpoint for trained networks.
//!
//! Layout (all integers and floats little-endian, floats IEEE-754 binary64):
//!
//! ```text
//! magic   8 bytes  "VDPCKPT1"
//! n_sizes u32      number of layer-size entries
//! sizes   u32 each
//! shift   f64      input-map shift
//! scale   f64      input-map scale
//! seed    u64      RNG seed the run was started from
//! n_par   u64      parameter count
//! params  f64 each flattened layer-major parameters
//! n_hist  u64      loss-history length
//! history (u64 iteration, f64 mse_nn, f64 mse_i, f64 mse_d, f64 total) each
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pinn::loss::LossBreakdown;
use crate::pinn::mlp::MlpParams;

const MAGIC: &[u8; 8] = b"VDPCKPT1";

/// A trained network plus the provenance needed to resume or compare runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub sizes: Vec<usize>,
    pub input_shift: f64,
    pub input_scale: f64,
    pub seed: u64,
    pub params_flat: Vec<f64>,
    pub history: Vec<(u64, LossBreakdown)>,
}

impl Checkpoint {
    pub fn from_params(
        params: &MlpParams,
        seed: u64,
        history: Vec<(u64, LossBreakdown)>,
    ) -> Self {
        let (shift, scale) = params.input_map();
        Self {
            sizes: params.sizes().to_vec(),
            input_shift: shift,
            input_scale: scale,
            seed,
            params_flat: params.flatten(),
            history,
        }
    }

    /// Rebuild the network this checkpoint describes.
    pub fn to_params(&self) -> Result<MlpParams> {
        MlpParams::zeros(&self.sizes)?
            .with_input_map(self.input_shift, self.input_scale)?
            .with_flat(&self.params_flat)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&self.input_shift.to_le_bytes())?;
        w.write_all(&self.input_scale.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.params_flat.len() as u64).to_le_bytes())?;
        for &p in &self.params_flat {
            w.write_all(&p.to_le_bytes())?;
        }
        w.write_all(&(self.history.len() as u64).to_le_bytes())?;
        for (iter, lb) in &self.history {
            w.write_all(&iter.to_le_bytes())?;
            for v in [lb.mse_nn, lb.mse_i, lb.mse_d, lb.total] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let n_sizes = read_u32(&mut r)? as usize;
        if n_sizes < 2 || n_sizes > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {n_sizes}")));
        }
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(read_u32(&mut r)? as usize);
        }
        let input_shift = read_f64(&mut r)?;
        let input_scale = read_f64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let n_par = read_u64(&mut r)? as usize;
        let expected: usize = sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        if n_par != expected {
            return Err(Error::Checkpoint(format!(
                "parameter count {n_par} does not match sizes {sizes:?} (expected {expected})"
            )));
        }
        let mut params_flat = Vec::with_capacity(n_par);
        for _ in 0..n_par {
            params_flat.push(read_f64(&mut r)?);
        }
        let n_hist = read_u64(&mut r)? as usize;
        let mut history = Vec::with_capacity(n_hist.min(1 << 24));
        for _ in 0..n_hist {
            let iter = read_u64(&mut r)?;
            let mse_nn = read_f64(&mut r)?;
            let mse_i = read_f64(&mut r)?;
            let mse_d = read_f64(&mut r)?;
            let total = read_f64(&mut r)?;
            history.push((
                iter,
                LossBreakdown {
                    mse_nn,
                    mse_i,
                    mse_d,
                    total,
                },
            ));
        }
        Ok(Self {
            sizes,
            input_shift,
            input_scale,
            seed,
            params_flat,
            history,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let params = MlpParams::glorot(&[1, 8, 8, 1], 42)
            .unwrap()
            .with_input_span(0.0, 50.0)
            .unwrap();
        let history = vec![
            (
                0,
                LossBreakdown {
                    mse_nn: 1.5,
                    mse_i: 0.25,
                    mse_d: 0.125,
                    total: 1.875,
                },
            ),
            (
                7,
                LossBreakdown {
                    mse_nn: 0.5,
                    mse_i: 0.0,
                    mse_d: 1e-300,
                    total: 0.5,
                },
            ),
        ];
        let ck = Checkpoint::from_params(&params, 42, history);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ck, back);
        let rebuilt = back.to_params().unwrap();
        assert_eq!(rebuilt, params);
    }

    #[test]
    fn rejects_corrupted_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        assert!(Checkpoint::load(&path).is_err());
        std::fs::write(&path, b"VDP").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
