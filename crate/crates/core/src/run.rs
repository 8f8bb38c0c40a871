//! A complete training run: model and optimizer construction from a seed,
//! the epoch loop, per-epoch metrics and the checkpoint schedule.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{save_checkpoint, Checkpoint, Dataset, MetricsRow};
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::nn::OptimizerKind;
use crate::rng;
use crate::vae::{evaluate, steps_per_epoch, TrainSpec, Trainer, VaeModel, DECODER_HIDDEN, ENCODER_HIDDEN};

const MODEL_TAG: u64 = 0x4d4f_4445;
const TRAIN_TAG: u64 = 0x5452_4149;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub run_id: String,
    pub estimator: EstimatorConfig,
    /// Categories per slot.
    pub n: usize,
    /// Latent slots.
    pub latents: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub binarize: bool,
    /// Checkpoint cadence in epochs; may be fractional. Zero disables
    /// intermediate checkpoints (the final one is still written).
    pub checkpoint_every: f64,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Record `wall_ms`; off by default so repeated runs write identical CSVs.
    pub wall_clock: bool,
}

impl RunSettings {
    pub fn new(estimator: EstimatorConfig) -> Self {
        Self {
            run_id: "run".into(),
            estimator,
            n: 8,
            latents: 4,
            optimizer: OptimizerKind::Adam,
            lr: 5e-4,
            epochs: 10,
            batch_size: 100,
            seed: 0,
            binarize: false,
            checkpoint_every: 5.0,
            encoder_hidden: ENCODER_HIDDEN.to_vec(),
            decoder_hidden: DECODER_HIDDEN.to_vec(),
            wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.n < 2 || self.latents == 0 {
            return Err(Error::Config(format!("need n >= 2 and latents >= 1, got {}x{}", self.n, self.latents)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.checkpoint_every >= 0.0 && self.checkpoint_every.is_finite()) {
            return Err(Error::Config(format!("checkpoint_every must be >= 0, got {}", self.checkpoint_every)));
        }
        Ok(())
    }

    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec { estimator: self.estimator, batch_size: self.batch_size, data_seed: self.seed, binarize: self.binarize }
    }

    /// Fresh model, optimizer and training stream, all keyed by `seed`.
    pub fn init_trainer(&self, pixels: usize) -> Result<Trainer> {
        self.validate()?;
        let model = VaeModel::with_sizes(
            &mut rng::stream(self.seed, &[MODEL_TAG]),
            self.n,
            self.latents,
            pixels,
            &self.encoder_hidden,
            &self.decoder_hidden,
        )?;
        let opt = model.new_optimizer(self.optimizer, self.lr)?;
        Ok(Trainer::new(model, opt, rng::stream(self.seed, &[TRAIN_TAG])))
    }

    /// Steps at which checkpoints are written: multiples of the cadence and
    /// the final step.
    pub fn checkpoint_steps(&self, dataset_len: usize) -> Vec<u64> {
        let spe = steps_per_epoch(dataset_len, self.batch_size);
        let total = self.epochs * spe;
        let mut steps = Vec::new();
        if self.checkpoint_every > 0.0 {
            let mut k = 0u64;
            loop {
                let s = (k as f64 * self.checkpoint_every * spe as f64).round() as u64;
                if s > total {
                    break;
                }
                if steps.last() != Some(&s) {
                    steps.push(s);
                }
                k += 1;
            }
        }
        if steps.last() != Some(&total) {
            steps.push(total);
        }
        steps
    }

    fn row(&self, epoch: f64, step: u64) -> MetricsRow {
        MetricsRow {
            run_id: self.run_id.clone(),
            epoch,
            step,
            estimator: self.estimator.kind.name().to_string(),
            tau: self.estimator.tau.get(),
            eta: self.estimator.eta,
            beta: self.estimator.beta,
            k: self.estimator.k_samples,
            seed: self.seed,
            train_neg_elbo: None,
            test_neg_elbo: None,
            bias_cosine: None,
            sample_var: None,
            sample_std: None,
            wall_ms: None,
        }
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step-{step:08}.ckpt"))
}

/// Checkpoints in `dir`, sorted by step.
pub fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(step) = name.strip_prefix("step-").and_then(|r| r.strip_suffix(".ckpt")).and_then(|d| d.parse().ok()) {
            found.push((step, path));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trainer: Trainer,
    pub rows: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Trains until `settings.epochs`, starting from `trainer` (fresh or
/// resumed). One metrics row per completed epoch is passed to `sink`.
/// Checkpoints go to `checkpoint_dir` when given.
pub fn train_run(
    settings: &RunSettings,
    mut trainer: Trainer,
    train: &Dataset,
    test: Option<&Dataset>,
    checkpoint_dir: Option<&Path>,
    sink: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<RunOutcome> {
    settings.validate()?;
    let spec = settings.train_spec();
    let spe = steps_per_epoch(train.len(), settings.batch_size);
    let total = settings.epochs * spe;
    let schedule = settings.checkpoint_steps(train.len());
    let mut rows = Vec::new();
    let mut written = Vec::new();
    let started = Instant::now();
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let save = |trainer: &Trainer, written: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = checkpoint_dir {
            let path = checkpoint_path(dir, trainer.step);
            save_checkpoint(&path, &Checkpoint::from_trainer(trainer, train.len(), settings.batch_size))?;
            written.push(path);
        }
        Ok(())
    };
    if schedule.first() == Some(&trainer.step) && trainer.step == 0 {
        save(&trainer, &mut written)?;
    }
    let start = trainer.step;
    for &target in schedule.iter().filter(|s| **s > start) {
        let ends = trainer.advance(&spec, train, target.min(total) - trainer.step)?;
        for end in ends {
            let mut row = settings.row(end.epoch as f64, end.step);
            row.train_neg_elbo = Some(end.train_neg_elbo);
            if let Some(test) = test {
                row.test_neg_elbo = Some(evaluate(&trainer.model, test, settings.batch_size, settings.seed)?.neg_elbo);
            }
            if settings.wall_clock {
                row.wall_ms = Some(started.elapsed().as_millis() as u64);
            }
            sink(&row)?;
            rows.push(row);
        }
        save(&trainer, &mut written)?;
    }
    Ok(RunOutcome { trainer, rows, checkpoints: written })
}
