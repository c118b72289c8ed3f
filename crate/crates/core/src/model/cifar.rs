//! CIFAR-10 binary batch reader.
//!
//! Each record is 3073 bytes: one label byte followed by 3072 pixel bytes laid
//! out as three 32x32 planes (R, G, B). Pixels are mapped to `[0, 1]` by
//! dividing by 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const RECORD_BYTES: usize = 1 + 3 * 32 * 32;
pub const TEST_BATCH_RECORDS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Tensor,
    pub label: usize,
}

pub fn parse_cifar10(bytes: &[u8]) -> Result<Vec<LabeledImage>> {
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Dataset(format!(
            "size {} is not a multiple of the {RECORD_BYTES}-byte record",
            bytes.len()
        )));
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label > 9 {
                return Err(Error::Dataset(format!("record {i}: label byte {label} > 9")));
            }
            let pixels = rec[1..].iter().map(|&b| b as f32 / 255.0).collect();
            Ok(LabeledImage {
                image: Tensor::from_vec(&[3, 32, 32], pixels)?,
                label,
            })
        })
        .collect()
}

pub fn load_cifar10(path: impl AsRef<Path>) -> Result<Vec<LabeledImage>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar10(&bytes)
}

/// Inverse of [`parse_cifar10`] for images whose pixels are multiples of 1/255.
pub fn encode_cifar10(items: &[LabeledImage]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(items.len() * RECORD_BYTES);
    for it in items {
        it.image.ensure_shape(&[3, 32, 32])?;
        if it.label > 9 {
            return Err(Error::Dataset(format!("label {} > 9", it.label)));
        }
        out.push(it.label as u8);
        out.extend(
            it.image
                .data()
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}
