//! `NCMD` model snapshots.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        [u8; 4] = "NCMD"
//! version      u32     = 1
//! layer_count  u32     linear layers, output layer included
//! dims         (layer_count + 1) × u64, input width first
//! activation   u8      0 = relu, 1 = tanh, 2 = leakyrelu
//! slope        f64     leaky slope, 0 otherwise
//! parameters   per layer: weight row-major (d_out × d_in) then bias, as f64
//! ```

use std::fs;
use std::path::Path;

use super::model::{Activation, Linear, MlpModel};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"NCMD";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.parameter_count());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for d in model.architecture().dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    let (tag, slope) = match model.activation {
        Activation::Relu => (0u8, 0.0),
        Activation::Tanh => (1, 0.0),
        Activation::LeakyRelu { slope } => (2, slope),
    };
    out.push(tag);
    out.extend_from_slice(&slope.to_le_bytes());
    for layer in &model.layers {
        for v in layer.weight.as_slice().iter().chain(&layer.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8], origin: &Path) -> Result<MlpModel> {
    let truncated = || Error::format(origin, "truncated snapshot");
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok_or_else(truncated)? != SNAPSHOT_MAGIC {
        return Err(Error::format(origin, "bad magic, expected NCMD"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::format(origin, format!("unsupported version {version}")));
    }
    let layer_count = r.u32().ok_or_else(truncated)? as usize;
    if layer_count == 0 {
        return Err(Error::format(origin, "snapshot has no layers"));
    }
    let dims = (0..=layer_count)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(truncated)?;
    let tag = r.take(1).ok_or_else(truncated)?[0];
    let slope = r.f64().ok_or_else(truncated)?;
    let activation = match tag {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        2 => Activation::LeakyRelu { slope },
        t => return Err(Error::format(origin, format!("unknown activation tag {t}"))),
    };
    let mut layers = Vec::with_capacity(layer_count);
    for w in dims.windows(2) {
        let (d_in, d_out) = (w[0], w[1]);
        let n = d_in.checked_mul(d_out).ok_or_else(truncated)?;
        let weight = (0..n).map(|_| r.f64()).collect::<Option<Vec<_>>>().ok_or_else(truncated)?;
        let bias = (0..d_out).map(|_| r.f64()).collect::<Option<Vec<_>>>().ok_or_else(truncated)?;
        let weight = Matrix::from_vec(d_out, d_in, weight)
            .map_err(|e| Error::format(origin, e.to_string()))?;
        layers.push(Linear { weight, bias });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(origin, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(MlpModel { layers, activation })
}

pub fn save_model(path: &Path, model: &MlpModel) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}
