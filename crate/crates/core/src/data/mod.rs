//! Datasets, batching, checkpoints and the metrics CSV.

pub mod checkpoint;
pub mod idx;
pub mod metrics;
pub mod synth;

use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels};
pub use metrics::{read_metrics, write_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use synth::{synth_dataset, Pattern};

/// Side length of the images this crate trains on.
pub const IMAGE_SIDE: usize = 28;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split '{s}' (expected train or test)"))),
        }
    }
}

/// Rows are images with pixel intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Array2<f64>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Array2<f64>, split: Split) -> Result<Self> {
        if images.nrows() == 0 || images.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { images, split })
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.images.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn images(&self) -> ArrayView2<'_, f64> {
        self.images.view()
    }

    /// The first `n` images (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.clamp(1, self.len());
        Dataset { images: self.images.slice(ndarray::s![..n, ..]).to_owned(), split: self.split }
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        Batch { images: self.images.select(Axis(0), indices) }
    }
}

/// A minibatch of `B ≥ 1` images.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    images: Array2<f64>,
}

impl Batch {
    pub fn new(images: Array2<f64>) -> Result<Self> {
        Dataset::new(images, Split::Train).map(|d| Batch { images: d.images })
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.images.nrows() == 0
    }

    pub fn images(&self) -> ArrayView2<'_, f64> {
        self.images.view()
    }

    /// Each pixel replaced by a Bernoulli draw with that intensity.
    pub fn binarized(&self, rng: &mut rng::Rng) -> Batch {
        Batch { images: self.images.mapv(|p| if rng::uniform_open(rng) < p { 1.0 } else { 0.0 }) }
    }
}

const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Index lists for one epoch: a permutation keyed by `(seed, epoch)` cut
/// into chunks of `batch_size`, the last possibly shorter.
pub fn epoch_order(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if len == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(seed, &[SHUFFLE_TAG, epoch]));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Batches of one epoch in shuffled order.
pub fn batches(dataset: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Result<impl Iterator<Item = Batch> + '_> {
    Ok(epoch_order(dataset.len(), batch_size, seed, epoch)?.into_iter().map(move |idx| dataset.gather(&idx)))
}
