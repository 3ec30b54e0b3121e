//! Binary parameter checkpoints.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! magic   8 bytes  "GMPCKPT\0"
//! version u32      1
//! count   u32      number of tensors
//! per tensor:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   ndim     u32, dims (ndim × u64)
//!   data     product(dims) × f64, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use super::params::GmpParams;
use crate::config::GmpConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"GMPCKPT\0";
pub const VERSION: u32 = 1;

fn ck(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(params: &GmpParams, mut w: W) -> Result<()> {
    let tensors = params.named_tensors();
    w.write_all(MAGIC).map_err(ck)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(ck)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())
        .map_err(ck)?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())
            .map_err(ck)?;
        w.write_all(name.as_bytes()).map_err(ck)?;
        w.write_all(&(t.ndim() as u32).to_le_bytes()).map_err(ck)?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes()).map_err(ck)?;
        }
        for v in t.iter() {
            w.write_all(&v.to_le_bytes()).map_err(ck)?;
        }
    }
    w.flush().map_err(ck)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(ck)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(ck)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads every tensor without interpreting it.
pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, ArrayD<f64>)>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(ck)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        if len > 4096 {
            return Err(Error::Checkpoint("tensor name too long".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(ck)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let ndim = read_u32(&mut r)? as usize;
        if ndim > 8 {
            return Err(Error::Checkpoint(format!("{name}: too many dimensions")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(read_u64(&mut r)? as usize);
        }
        let total = dims
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .filter(|t| *t <= 1 << 28)
            .ok_or_else(|| Error::Checkpoint(format!("{name}: tensor too large")))?;
        let mut data = Vec::with_capacity(total);
        let mut b = [0u8; 8];
        for _ in 0..total {
            r.read_exact(&mut b).map_err(ck)?;
            data.push(f64::from_le_bytes(b));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        out.push((name, arr));
    }
    Ok(out)
}

pub fn read_checkpoint<R: Read>(config: &GmpConfig, r: R) -> Result<GmpParams> {
    GmpParams::from_named(config, read_tensors(r)?)
}

pub fn save_checkpoint(params: &GmpParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(params, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(config: &GmpConfig, path: &Path) -> Result<GmpParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(config, std::io::BufReader::new(file))
}
