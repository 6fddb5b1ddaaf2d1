//! IDX files (the MNIST / FashionMNIST distribution format).
//!
//! Header: two zero bytes, a dtype byte, a rank byte, then `rank` big-endian
//! `u32` dimensions. Only unsigned-byte payloads (dtype `0x08`) are supported.

use std::fs;
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const DTYPE_U8: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn parse_idx(bytes: &[u8], origin: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(Error::format(origin, "truncated IDX header"));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::format(origin, format!("bad IDX magic {:02x?}", &bytes[..4])));
    }
    if bytes[2] != DTYPE_U8 {
        return Err(Error::format(
            origin,
            format!("unsupported IDX dtype 0x{:02x}, only unsigned byte", bytes[2]),
        ));
    }
    let rank = bytes[3] as usize;
    if rank == 0 {
        return Err(Error::format(origin, "IDX rank 0"));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::format(origin, "truncated IDX dimensions"));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(origin, "IDX dimensions overflow"))?;
    let payload = &bytes[header..];
    if payload.len() != count {
        return Err(Error::format(
            origin,
            format!("IDX payload has {} bytes, dimensions {:?} need {count}", payload.len(), dims),
        ));
    }
    Ok(IdxArray {
        dims,
        data: payload.to_vec(),
    })
}

fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes, path)
}

/// Loads an image file (rank ≥ 2, first dimension = sample count) and a rank-1
/// label file. Pixels are flattened row-major and scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    images_and_labels(img, lab, images, labels)
}

pub(crate) fn images_and_labels(
    img: IdxArray,
    lab: IdxArray,
    images: &Path,
    labels: &Path,
) -> Result<LabeledDataset> {
    if img.dims.len() < 2 {
        return Err(Error::format(images, format!("image file has rank {}", img.dims.len())));
    }
    if lab.dims.len() != 1 {
        return Err(Error::format(labels, format!("label file has rank {}", lab.dims.len())));
    }
    let n = img.dims[0];
    if lab.dims[0] != n {
        return Err(Error::format(
            labels,
            format!("{} labels for {n} images", lab.dims[0]),
        ));
    }
    let width: usize = img.dims[1..].iter().product();
    let values = img.data.iter().map(|&b| b as f64 / 255.0).collect();
    let inputs = Matrix::from_vec(n, width, values)?;
    let labels: Vec<usize> = lab.data.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(inputs, labels, class_count)
}
