//! Procedural 28×28 images for runs without MNIST on disk.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng as _;

use super::{Dataset, Split, IMAGE_SIDE, PIXELS};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// One horizontal and one vertical bar, each at one of 8 positions,
    /// with random thickness and intensity.
    Bars,
    /// One to three Gaussian blobs on a 4×4 grid of centres.
    Blobs,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Bars => "bars",
            Pattern::Blobs => "blobs",
        })
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bars" => Ok(Pattern::Bars),
            "blobs" => Ok(Pattern::Blobs),
            _ => Err(Error::Config(format!("unknown synthetic pattern '{s}' (expected bars or blobs)"))),
        }
    }
}

const SYNTH_TAG: u64 = 0x5359_4e54;

fn bars(img: &mut [f64], rng: &mut rng::Rng) {
    let row = 2 + 3 * rng.random_range(0..8);
    let col = 2 + 3 * rng.random_range(0..8);
    let (th, tv) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let (ih, iv): (f64, f64) = (rng.random_range(0.6..1.0), rng.random_range(0.6..1.0));
    for r in 0..IMAGE_SIDE {
        for c in 0..IMAGE_SIDE {
            let mut v: f64 = 0.0;
            if r >= row && r < row + th {
                v = v.max(ih);
            }
            if c >= col && c < col + tv {
                v = v.max(iv);
            }
            img[r * IMAGE_SIDE + c] = v;
        }
    }
}

fn blobs(img: &mut [f64], rng: &mut rng::Rng) {
    let count = rng.random_range(1..=3);
    for _ in 0..count {
        let cy = 4.0 + 6.5 * rng.random_range(0..4) as f64;
        let cx = 4.0 + 6.5 * rng.random_range(0..4) as f64;
        let sigma: f64 = rng.random_range(1.5..3.5);
        let peak: f64 = rng.random_range(0.6..1.0);
        for r in 0..IMAGE_SIDE {
            for c in 0..IMAGE_SIDE {
                let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                let v = peak * (-d2 / (2.0 * sigma * sigma)).exp();
                let p = &mut img[r * IMAGE_SIDE + c];
                *p = p.max(v);
            }
        }
    }
}

/// `n` images; image `i` depends only on `(seed, i, pattern)`.
pub fn synth_dataset(seed: u64, n: usize, pattern: Pattern, split: Split) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut images = Array2::zeros((n, PIXELS));
    for (i, mut row) in images.rows_mut().into_iter().enumerate() {
        let mut rng = rng::stream(seed, &[SYNTH_TAG, pattern as u64, i as u64]);
        let img = row.as_slice_mut().expect("row-major");
        match pattern {
            Pattern::Bars => bars(img, &mut rng),
            Pattern::Blobs => blobs(img, &mut rng),
        }
        // faint background texture
        for p in img.iter_mut() {
            *p = (*p + 0.05 * rng.random::<f64>()).min(1.0);
        }
    }
    Dataset::new(images, split)
}
