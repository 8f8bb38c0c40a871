use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::stats::{measure, MeasureOptions, StatsReport};
use crate::data::{load_checkpoint, Batch, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::run::{list_checkpoints, train_run, RunSettings};

/// `f(0), …, f(count − 1)` on up to `jobs` threads, returned in index order.
pub fn parallel_map<T: Send>(count: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, count.max(1));
    if jobs == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = f(i);
                slots.lock().expect("no worker panicked")[i] = Some(value);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|v| v.expect("every index ran")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epoch: f64,
    pub step: u64,
    pub report: StatsReport,
}

/// Bias and variance of every config at every checkpoint under `dir`, with
/// the batch and the replicate streams held fixed across checkpoints.
pub fn checkpoint_sweep(dir: &Path, batch: &Batch, configs: &[EstimatorConfig], opts: MeasureOptions) -> Result<Vec<SweepRow>> {
    let paths = list_checkpoints(dir)?;
    if paths.is_empty() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no checkpoints in {}", dir.display()),
        )));
    }
    let mut rows = Vec::new();
    for path in paths {
        let ckpt = load_checkpoint(&path)?;
        for report in measure(&ckpt.model, batch, configs, opts)? {
            rows.push(SweepRow { epoch: ckpt.epoch, step: ckpt.step, report });
        }
    }
    Ok(rows)
}

/// −0.2 to 1.2 in steps of 0.05.
pub fn default_beta_grid() -> Vec<f64> {
    (0..29).map(|i| (5 * i - 20) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaCell {
    pub beta: f64,
    pub seed: u64,
    /// Training metric of the final epoch.
    pub train_neg_elbo: f64,
}

/// One ReinMax-RK2(β) run per `(β, seed)`, everything else from `base`.
/// Cells come back β-major in grid order whatever `jobs` is.
pub fn beta_sweep(base: &RunSettings, betas: &[f64], seeds: &[u64], train: &Dataset, jobs: usize) -> Result<Vec<BetaCell>> {
    let cells: Vec<(f64, u64)> = betas.iter().flat_map(|&b| seeds.iter().map(move |&s| (b, s))).collect();
    let results = parallel_map(cells.len(), jobs, |i| -> Result<BetaCell> {
        let (beta, seed) = cells[i];
        let mut settings = base.clone();
        settings.estimator = EstimatorConfig { kind: EstimatorKind::ReinMaxRk2, ..base.estimator }.with_beta(beta);
        settings.seed = seed;
        let trainer = settings.init_trainer(train.dim())?;
        let outcome = train_run(&settings, trainer, train, None, None, &mut |_| Ok(()))?;
        let last = outcome.rows.last().and_then(|r| r.train_neg_elbo).ok_or_else(|| Error::Config("zero epochs".into()))?;
        Ok(BetaCell { beta, seed, train_neg_elbo: last })
    });
    results.into_iter().collect()
}
