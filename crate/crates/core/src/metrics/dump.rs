//! `NCAD` activation dumps: one hidden layer's activations together with the
//! true labels and the network's predictions, produced by any framework.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    [u8; 4] = "NCAD"
//! version  u32     = 1
//! n        u64     samples
//! p        u64     activation width
//! classes  u32
//! dtype    u8      4 = f32, 8 = f64
//! labels       n × u32
//! predictions  n × u32
//! activations  n × p values of `dtype`, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DUMP_MAGIC: [u8; 4] = *b"NCAD";
pub const DUMP_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpDtype {
    F32,
    F64,
}

impl DumpDtype {
    fn tag(self) -> u8 {
        match self {
            DumpDtype::F32 => 4,
            DumpDtype::F64 => 8,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            4 => Some(DumpDtype::F32),
            8 => Some(DumpDtype::F64),
            _ => None,
        }
    }

    fn width(self) -> usize {
        self.tag() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub class_count: usize,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
    /// `n × p`; values are widened to `f64` on read.
    pub activations: Matrix,
    pub dtype: DumpDtype,
}

impl ActivationDump {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let (n, p) = self.activations.shape();
        if self.labels.len() != n || self.predictions.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} activation rows, {} labels, {} predictions",
                self.labels.len(),
                self.predictions.len()
            )));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * n + n * p * self.dtype.width());
        out.extend_from_slice(&DUMP_MAGIC);
        out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(p as u64).to_le_bytes());
        out.extend_from_slice(&to_u32(self.class_count)?.to_le_bytes());
        out.push(self.dtype.tag());
        for &l in self.labels.iter().chain(&self.predictions) {
            out.extend_from_slice(&to_u32(l)?.to_le_bytes());
        }
        match self.dtype {
            DumpDtype::F32 => {
                for &v in self.activations.as_slice() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            DumpDtype::F64 => {
                for &v in self.activations.as_slice() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    /// Parses a dump; `origin` only labels error messages.
    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::format(origin, reason);
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
        }
        if bytes[..4] != DUMP_MAGIC {
            return Err(bad(format!("bad magic {:02x?}", &bytes[..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != DUMP_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let p = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let class_count = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
        let dtype = DumpDtype::from_tag(bytes[28])
            .ok_or_else(|| bad(format!("unknown dtype tag {}", bytes[28])))?;

        let expected = (n as u128) * 8 + (n as u128) * (p as u128) * dtype.width() as u128
            + HEADER_LEN as u128;
        if expected != bytes.len() as u128 {
            return Err(bad(format!(
                "expected {expected} bytes for n={n}, p={p}, found {}",
                bytes.len()
            )));
        }
        let (n, p) = (n as usize, p as usize);
        let mut cursor = HEADER_LEN;
        let mut read_u32s = |count: usize| -> Vec<usize> {
            let out = bytes[cursor..cursor + 4 * count]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
                .collect();
            cursor += 4 * count;
            out
        };
        let labels = read_u32s(n);
        let predictions = read_u32s(n);
        let body = &bytes[cursor..];
        let values: Vec<f64> = match dtype {
            DumpDtype::F32 => body
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            DumpDtype::F64 => body
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        };
        if let Some(&l) = labels.iter().chain(&predictions).find(|&&l| l >= class_count) {
            return Err(bad(format!("class index {l} >= class count {class_count}")));
        }
        let activations =
            Matrix::from_vec(n, p, values).map_err(|e| bad(format!("activation block: {e}")))?;
        Ok(Self {
            class_count,
            labels,
            predictions,
            activations,
            dtype,
        })
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{v} does not fit in u32")))
}

pub fn write_dump(path: &Path, dump: &ActivationDump) -> Result<()> {
    fs::write(path, dump.encode()?).map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<ActivationDump> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ActivationDump::decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dtype: DumpDtype) -> ActivationDump {
        ActivationDump {
            class_count: 3,
            labels: vec![0, 1, 2, 1],
            predictions: vec![0, 1, 1, 1],
            activations: Matrix::from_vec(4, 2, vec![0.5, -1.0, 2.0, 3.25, 0.0, 1.0, -4.5, 8.0])
                .unwrap(),
            dtype,
        }
    }

    #[test]
    fn header_layout() {
        let bytes = fixture(DumpDtype::F64).encode().unwrap();
        assert_eq!(&bytes[..4], b"NCAD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..16], &4u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &3u32.to_le_bytes());
        assert_eq!(bytes[28], 8);
        assert_eq!(bytes.len(), 29 + 4 * 4 * 2 + 8 * 8);
    }

    #[test]
    fn roundtrip_both_dtypes() {
        for dtype in [DumpDtype::F32, DumpDtype::F64] {
            let d = fixture(dtype);
            let back = ActivationDump::decode(&d.encode().unwrap(), Path::new("mem")).unwrap();
            // fixture values are exact in f32
            assert_eq!(back, d);
        }
    }

    #[test]
    fn corrupt_inputs() {
        let good = fixture(DumpDtype::F64).encode().unwrap();
        let origin = Path::new("x.ncad");

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let err = ActivationDump::decode(&bad_magic, origin).unwrap_err();
        assert!(err.to_string().contains("x.ncad"), "{err}");

        assert!(ActivationDump::decode(&good[..good.len() - 1], origin).is_err());
        assert!(ActivationDump::decode(&good[..10], origin).is_err());

        let mut bad_dtype = good.clone();
        bad_dtype[28] = 3;
        assert!(ActivationDump::decode(&bad_dtype, origin).is_err());

        let mut bad_label = good;
        bad_label[29..33].copy_from_slice(&7u32.to_le_bytes());
        assert!(ActivationDump::decode(&bad_label, origin).is_err());
    }
}
