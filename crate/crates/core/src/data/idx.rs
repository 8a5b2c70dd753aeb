//! IDX files: big-endian magic `0x0000 <type> <ndims>`, one big-endian `u32`
//! per dimension, then raw bytes.

use std::path::Path;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const UBYTE: u8 = 0x08;

fn parse_header(bytes: &[u8], ndims: u8, path: &Path) -> Result<(Vec<usize>, usize)> {
    let bad = |what: String| Error::Data(format!("{}: {what}", path.display()));
    if bytes.len() < 4 {
        return Err(bad("file too short for an IDX header".into()));
    }
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != UBYTE || bytes[3] != ndims {
        return Err(bad(format!(
            "bad magic {:02x}{:02x}{:02x}{:02x}, expected 000008{ndims:02x}",
            bytes[0], bytes[1], bytes[2], bytes[3]
        )));
    }
    let header = 4 + 4 * ndims as usize;
    if bytes.len() < header {
        return Err(bad("truncated dimension list".into()));
    }
    let dims: Vec<usize> = (0..ndims as usize)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    if bytes.len() - header != expected {
        return Err(bad(format!(
            "payload holds {} bytes, dimensions {dims:?} need {expected}",
            bytes.len() - header
        )));
    }
    Ok((dims, header))
}

/// Images as `[N, H, W]` scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path)?;
    let (dims, header) = parse_header(&bytes, 3, path)?;
    let data = bytes[header..].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::new(dims, data)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path)?;
    let (_, header) = parse_header(&bytes, 1, path)?;
    Ok(bytes[header..].iter().map(|&b| b as usize).collect())
}

/// Reads an image/label pair and keeps the first `per_class` examples of
/// each class in file order (all of them when `None`).
pub fn mnist_subset(
    images: &Path,
    labels: &Path,
    per_class: Option<usize>,
    as_images: bool,
    split: Split,
) -> Result<Dataset> {
    let x = read_idx_images(images)?;
    let y = read_idx_labels(labels)?;
    if x.shape()[0] != y.len() {
        return Err(Error::Data(format!("{} images but {} labels", x.shape()[0], y.len())));
    }
    let classes = y.iter().max().map_or(0, |m| m + 1).max(2);
    let rows: Vec<usize> = match per_class {
        None => (0..y.len()).collect(),
        Some(k) => {
            let mut taken = vec![0; classes];
            let rows: Vec<usize> = (0..y.len())
                .filter(|&i| {
                    let keep = taken[y[i]] < k;
                    taken[y[i]] += keep as usize;
                    keep
                })
                .collect();
            if let Some(c) = taken.iter().position(|&t| t < k) {
                return Err(Error::Data(format!(
                    "class {c} has only {} examples, {k} requested",
                    taken[c]
                )));
            }
            rows
        }
    };
    let (h, w) = (x.shape()[1], x.shape()[2]);
    let picked = x.select_rows(&rows);
    let features = if as_images {
        picked.reshape(vec![rows.len(), 1, h, w])?
    } else {
        picked.reshape(vec![rows.len(), h * w])?
    };
    let labels = rows.iter().map(|&r| y[r]).collect();
    Dataset::new("mnist-subset", split, features, labels, classes)
}
