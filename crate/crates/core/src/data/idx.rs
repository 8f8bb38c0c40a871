//! IDX containers: a big-endian header `00 00 08 rank`, `rank` u32
//! dimension sizes, then unsigned bytes.

use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Split, IMAGE_SIDE};
use crate::error::{IdxError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

/// Validates the header and returns the dimension sizes and payload.
fn parse(bytes: &[u8], rank: u8) -> Result<(Vec<u32>, &[u8]), IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::ShortHeader(4));
    }
    let magic = be_u32(bytes, 0);
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::BadMagic(magic));
    }
    if bytes[2] != 0x08 {
        return Err(IdxError::BadElementType(bytes[2]));
    }
    if bytes[3] != rank {
        return Err(IdxError::BadRank { got: bytes[3], expected: rank });
    }
    let header = 4 + 4 * rank as usize;
    if bytes.len() < header {
        return Err(IdxError::ShortHeader(header));
    }
    let dims: Vec<u32> = (0..rank as usize).map(|i| be_u32(bytes, 4 + 4 * i)).collect();
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .ok_or(IdxError::DimensionOverflow)?;
    if dims[0] == 0 {
        return Err(IdxError::Empty);
    }
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(IdxError::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(IdxError::TrailingBytes(payload.len() - expected));
    }
    Ok((dims, payload))
}

/// `N × 784` pixel matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>, IdxError> {
    let (dims, payload) = parse(bytes, 3)?;
    let side = IMAGE_SIDE as u32;
    if dims[1] != side || dims[2] != side {
        return Err(IdxError::BadImageSize { rows: dims[1], cols: dims[2] });
    }
    let n = dims[0] as usize;
    let pixels = IMAGE_SIDE * IMAGE_SIDE;
    Ok(Array2::from_shape_vec((n, pixels), payload.iter().map(|&b| f64::from(b) / 255.0).collect())
        .expect("payload length checked"))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    Ok(parse(bytes, 1)?.1.to_vec())
}

pub fn load_idx(path: &Path, split: Split) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    Dataset::new(parse_idx_images(&bytes)?, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v
    }

    fn fixture() -> Vec<u8> {
        let mut v = header(IMAGE_MAGIC, &[2, 28, 28]);
        v.extend((0..2 * 784).map(|i| (i % 256) as u8));
        v
    }

    #[test]
    fn two_image_fixture_exact_pixels() {
        let x = parse_idx_images(&fixture()).unwrap();
        assert_eq!(x.dim(), (2, 784));
        assert_eq!(x[[0, 0]], 0.0);
        assert_eq!(x[[0, 255]], 1.0);
        assert_eq!(x[[0, 1]], 1.0 / 255.0);
        // flat index 784 + 5 = 789 ≡ 21 (mod 256)
        assert_eq!(x[[1, 5]], 21.0 / 255.0);
    }

    #[test]
    fn labels_parse() {
        let mut v = header(LABEL_MAGIC, &[3]);
        v.extend([7, 0, 9]);
        assert_eq!(parse_idx_labels(&v).unwrap(), vec![7, 0, 9]);
    }

    #[test]
    fn corruption_corpus() {
        let good = fixture();
        let mut wrong_magic = good.clone();
        wrong_magic[0] = 0xde;
        let mut wrong_type = good.clone();
        wrong_type[2] = 0x0d;
        let mut labels_as_images = header(LABEL_MAGIC, &[3]);
        labels_as_images.extend([1, 2, 3]);
        let mut small_images = header(IMAGE_MAGIC, &[1, 2, 2]);
        small_images.extend([0; 4]);
        let empty = header(IMAGE_MAGIC, &[0, 28, 28]);
        let mut trailing = good.clone();
        trailing.push(0);
        let cases: Vec<(Vec<u8>, IdxError)> = vec![
            (vec![0, 0], IdxError::ShortHeader(4)),
            (good[..10].to_vec(), IdxError::ShortHeader(16)),
            (wrong_magic, IdxError::BadMagic(0xde00_0803)),
            (wrong_type, IdxError::BadElementType(0x0d)),
            (labels_as_images, IdxError::BadRank { got: 1, expected: 3 }),
            (header(IMAGE_MAGIC, &[u32::MAX, u32::MAX, 2]), IdxError::DimensionOverflow),
            (small_images, IdxError::BadImageSize { rows: 2, cols: 2 }),
            (empty, IdxError::Empty),
            (good[..100].to_vec(), IdxError::Truncated { expected: 1568, found: 84 }),
            (trailing, IdxError::TrailingBytes(1)),
        ];
        for (bytes, want) in cases {
            assert_eq!(parse_idx_images(&bytes).unwrap_err(), want);
        }
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("imgs");
        std::fs::write(&path, fixture()).unwrap();
        let ds = load_idx(&path, Split::Test).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(load_idx(&dir.path().join("missing"), Split::Test).is_err());
    }
}
