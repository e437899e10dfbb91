//! Versioned binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   8 bytes  "SWNETPAR"
//! version u32      1
//! kind    u32      0 = far-field, 1 = seismic
//! dir     u32      0 = inverse, 1 = forward
//! t, pd, px, n, m, window, alpha, layers   u32 each
//! init    u32      0 = glorot, 1 = from-factorization
//! count   u64      number of f64 parameter values
//! values  count x f64, in declaration order
//! ```
//!
//! A text sidecar with the same spec (`ModelSpec::to_text`) is written next
//! to the binary file for inspection.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{build, InitMode, MapDirection, ModelKind, ModelParams, ModelSpec};

pub const MAGIC: &[u8; 8] = b"SWNETPAR";
pub const VERSION: u32 = 1;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let spec = &params.spec;
    let flat = params.flat_params();
    let mut out = Vec::with_capacity(8 + 12 * 4 + 8 + flat.len() * 8);
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        match spec.kind {
            ModelKind::FarField => 0,
            ModelKind::Seismic => 1,
        },
        match spec.direction {
            MapDirection::Inverse => 0,
            MapDirection::Forward => 1,
        },
        spec.t as u32,
        spec.p_d as u32,
        spec.p_x as u32,
        spec.n as u32,
        spec.m as u32,
        spec.window as u32,
        spec.alpha as u32,
        spec.layers as u32,
        match spec.init {
            InitMode::Glorot => 0,
            InitMode::FromFactorization => 1,
        },
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("checkpoint truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::format("bad checkpoint magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported checkpoint version {version}")));
    }
    let kind = match r.u32()? {
        0 => ModelKind::FarField,
        1 => ModelKind::Seismic,
        other => return Err(Error::format(format!("unknown kind tag {other}"))),
    };
    let direction = match r.u32()? {
        0 => MapDirection::Inverse,
        1 => MapDirection::Forward,
        other => return Err(Error::format(format!("unknown direction tag {other}"))),
    };
    let mut nums = [0usize; 8];
    for slot in nums.iter_mut() {
        *slot = r.u32()? as usize;
    }
    let init = match r.u32()? {
        0 => InitMode::Glorot,
        1 => InitMode::FromFactorization,
        other => return Err(Error::format(format!("unknown init tag {other}"))),
    };
    let spec = ModelSpec {
        kind,
        direction,
        t: nums[0],
        p_d: nums[1],
        p_x: nums[2],
        n: nums[3],
        m: nums[4],
        window: nums[5],
        alpha: nums[6],
        layers: nums[7],
        init,
    };
    spec.validate().map_err(|e| Error::format(format!("invalid checkpoint spec: {e}")))?;

    // guard allocation before trusting the declared count
    let count = r.u64()? as usize;
    let expected = crate::model::param_count(&spec);
    if count != expected {
        return Err(Error::format(format!(
            "parameter count {count} does not match the spec's {expected}"
        )));
    }
    if bytes.len() != r.pos + count * 8 {
        return Err(Error::format(format!(
            "checkpoint length {} does not match header ({} expected)",
            bytes.len(),
            r.pos + count * 8
        )));
    }
    let mut flat = Vec::with_capacity(count);
    for _ in 0..count {
        let v = r.f64()?;
        if !v.is_finite() {
            return Err(Error::format("checkpoint holds non-finite parameter values"));
        }
        flat.push(v);
    }

    // materialize a skeleton and load the values; init mode is recorded
    // metadata, the stored values already reflect it
    let mut params = build(&ModelSpec { init: InitMode::Glorot, ..spec }, 0, None)?;
    params.spec = spec;
    params.read_params(&flat)?;
    Ok(params)
}

pub fn write_file(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode(params))?;
    let sidecar = path.with_extension("spec");
    fs::write(sidecar, params.spec.to_text())?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}
