use std::path::{Path, PathBuf};
use std::process::ExitCode;

use catgrad::analysis::{
    beta_sweep, checkpoint_sweep, default_beta_grid, bias_variance_estimators, spread_estimators, verify_identities,
    MeasureOptions, VerifyOptions,
};
use catgrad::data::{
    load_checkpoint, load_idx, read_metrics, synth_dataset, write_metrics, Dataset, MetricsRow, MetricsWriter, Split,
};
use catgrad::estimators::{EstimatorConfig, EstimatorKind};
use catgrad::run::{train_run, RunSettings};
use catgrad::vae::evaluate;
use catgrad::Error;

use crate::config::{DataSource, RawConfig, RunConfig};
use crate::ConfigArgs;

pub const CONFIG_ECHO: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Data(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain(_) => Failure::Config(e.to_string()),
            Error::Idx(_) | Error::EmptyDataset | Error::Checkpoint(_) | Error::MetricsHeader { .. } => {
                Failure::Data(e.to_string())
            }
            other => Failure::Internal(other.to_string()),
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

/// Anything that goes wrong while reading inputs is a data error.
fn data<T>(r: catgrad::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Config(_) => Failure::from(e),
        other => Failure::Data(other.to_string()),
    })
}

fn io<T>(r: std::io::Result<T>, what: &Path) -> Result<T, Failure> {
    r.map_err(|e| Failure::Internal(format!("{}: {e}", what.display())))
}

pub fn load_config(args: &ConfigArgs, base: Option<&Path>) -> Result<RunConfig, Failure> {
    let mut raw = match base {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    if let Some(path) = &args.config {
        raw.extend(RawConfig::load(path)?);
    }
    raw.apply_env(std::env::vars())?;
    if let Some(seed) = args.seed {
        raw.set("seed", seed.to_string())?;
    }
    if let Some(out) = &args.out {
        raw.set("out", out.display().to_string())?;
    }
    if let Some(synth) = &args.synth {
        raw.set("synth", synth.as_str())?;
    }
    if let Some(epochs) = args.epochs {
        raw.set("epochs", epochs.to_string())?;
    }
    raw.apply_overrides(&args.set)?;
    Ok(RunConfig::from_raw(&raw)?)
}

pub fn load_data(source: &DataSource) -> Result<(Dataset, Dataset), Failure> {
    match source {
        DataSource::Idx(dir) => {
            let train = data(load_idx(&dir.join("train-images-idx3-ubyte"), Split::Train))?;
            let test = data(load_idx(&dir.join("t10k-images-idx3-ubyte"), Split::Test))?;
            Ok((train, test))
        }
        DataSource::Synth { pattern, train, test, seed } => Ok((
            data(synth_dataset(*seed, *train, *pattern, Split::Train))?,
            data(synth_dataset(seed.wrapping_add(1), *test, *pattern, Split::Test))?,
        )),
    }
}

pub fn train(args: &ConfigArgs, resume: Option<&Path>, wall_clock: bool) -> CmdResult {
    let mut cfg = load_config(args, None)?;
    cfg.settings.wall_clock = wall_clock;
    let (train, test) = load_data(&cfg.data)?;
    let out = cfg.out.clone();
    io(std::fs::create_dir_all(&out), &out)?;
    io(std::fs::write(out.join(CONFIG_ECHO), cfg.render()), &out)?;
    let metrics = out.join(METRICS_FILE);
    let ckpt_dir = out.join(CHECKPOINT_DIR);

    let trainer = match resume {
        Some(path) => {
            let ckpt = data(load_checkpoint(path))?;
            // rows past the checkpoint are reproduced by the resumed run
            if metrics.exists() {
                let kept: Vec<MetricsRow> =
                    data(read_metrics(&metrics))?.into_iter().filter(|r| r.step <= ckpt.step).collect();
                write_metrics(&metrics, &kept)?;
            }
            ckpt.into_trainer()
        }
        None => {
            if metrics.exists() {
                io(std::fs::remove_file(&metrics), &metrics)?;
            }
            if ckpt_dir.exists() {
                io(std::fs::remove_dir_all(&ckpt_dir), &ckpt_dir)?;
            }
            cfg.settings.init_trainer(train.dim())?
        }
    };
    let mut writer = MetricsWriter::open(&metrics)?;
    let outcome = train_run(&cfg.settings, trainer, &train, Some(&test), Some(&ckpt_dir), &mut |row| {
        eprintln!(
            "epoch {:>4} step {:>7} train {:.4} test {:.4}",
            row.epoch,
            row.step,
            row.train_neg_elbo.unwrap_or(f64::NAN),
            row.test_neg_elbo.unwrap_or(f64::NAN)
        );
        writer.write(row)
    })?;
    drop(writer);
    let last = outcome.rows.last();
    println!(
        "run {} finished at step {}: train {:.4} test {:.4}; {} checkpoints in {}",
        cfg.settings.run_id,
        outcome.trainer.step,
        last.and_then(|r| r.train_neg_elbo).unwrap_or(f64::NAN),
        last.and_then(|r| r.test_neg_elbo).unwrap_or(f64::NAN),
        outcome.checkpoints.len(),
        ckpt_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: &ConfigArgs, checkpoint: &Path, split: &str) -> CmdResult {
    let split: Split = split.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let ckpt = data(load_checkpoint(checkpoint))?;
    let base = checkpoint.parent().and_then(Path::parent).map(|run| run.join(CONFIG_ECHO)).filter(|p| p.exists());
    let cfg = load_config(args, base.as_deref())?;
    let (train, test) = load_data(&cfg.data)?;
    let dataset = if split == Split::Train { &train } else { &test };
    let e = data(evaluate(&ckpt.model, dataset, cfg.settings.batch_size, cfg.settings.seed))?;
    println!(
        "split={split} step={} epoch={} neg_elbo={:.6} recon={:.6} kl={:.6}",
        ckpt.step, ckpt.epoch, e.neg_elbo, e.recon_nll, e.kl
    );
    Ok(ExitCode::SUCCESS)
}

/// `bias-variance`, `spread`, or `kind[:key=value]*` entries separated by commas.
pub fn parse_estimators(spec: &str) -> Result<Vec<EstimatorConfig>, Failure> {
    match spec.trim() {
        "bias-variance" => return Ok(bias_variance_estimators()),
        "spread" => return Ok(spread_estimators()),
        _ => {}
    }
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut parts = item.split(':');
        let kind: EstimatorKind = parts.next().unwrap_or_default().parse()?;
        let mut raw = RawConfig::default();
        raw.set("estimator", kind.name())?;
        for kv in parts {
            let (k, v) = kv.split_once('=').ok_or_else(|| Failure::Config(format!("expected key=value in `{item}`")))?;
            raw.set(k, v)?;
        }
        out.push(RunConfig::from_raw(&raw)?.settings.estimator);
    }
    if out.is_empty() {
        return Err(Failure::Config("no estimators given".into()));
    }
    Ok(out)
}

fn estimator_row(settings: &RunSettings, est: &EstimatorConfig) -> MetricsRow {
    MetricsRow {
        run_id: settings.run_id.clone(),
        epoch: 0.0,
        step: 0,
        estimator: est.kind.name().to_string(),
        tau: est.tau.get(),
        eta: est.eta,
        beta: est.beta,
        k: est.k_samples,
        seed: settings.seed,
        train_neg_elbo: None,
        test_neg_elbo: None,
        bias_cosine: None,
        sample_var: None,
        sample_std: None,
        wall_ms: None,
    }
}

pub fn analyze(args: &ConfigArgs, run: &Path, estimators: &str, m: usize, jobs: usize, csv: Option<&Path>) -> CmdResult {
    let echo = run.join(CONFIG_ECHO);
    let cfg = load_config(args, echo.exists().then_some(echo.as_path()))?;
    let configs = parse_estimators(estimators)?;
    let (train, _) = load_data(&cfg.data)?;
    let b = cfg.settings.batch_size.min(train.len());
    let batch = train.gather(&(0..b).collect::<Vec<_>>());
    let ckpt_dir = run.join(CHECKPOINT_DIR);
    if !ckpt_dir.is_dir() {
        return Err(Failure::Data(format!("no checkpoint directory at {}", ckpt_dir.display())));
    }
    let opts = MeasureOptions { m, seed: cfg.settings.seed, jobs };
    let rows = checkpoint_sweep(&ckpt_dir, &batch, &configs, opts).map_err(|e| match e {
        Error::Io(_) => Failure::Data(e.to_string()),
        other => Failure::from(other),
    })?;
    println!("{:>7} {:>16} {:>5} {:>10} {:>12} {:>12}", "epoch", "estimator", "tau", "cosine", "variance", "std");
    let mut out_rows = Vec::new();
    for r in &rows {
        let est = &r.report.estimator;
        println!(
            "{:>7} {:>16} {:>5} {:>10.6} {:>12.6e} {:>12.6e}",
            r.epoch,
            est.kind.name(),
            est.tau.get(),
            r.report.bias_cosine,
            r.report.sample_var,
            r.report.sample_std
        );
        let mut row = estimator_row(&cfg.settings, est);
        row.epoch = r.epoch;
        row.step = r.step;
        row.bias_cosine = Some(r.report.bias_cosine);
        row.sample_var = Some(r.report.sample_var);
        row.sample_std = Some(r.report.sample_std);
        out_rows.push(row);
    }
    let path: PathBuf = csv.map(Path::to_path_buf).unwrap_or_else(|| run.join("analysis.csv"));
    write_metrics(&path, &out_rows)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Config(format!("bad grid `{spec}`"));
    if spec.trim() == "-0.2:1.2:0.05" {
        return Ok(default_beta_grid());
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let grid: Vec<f64> = if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        // ten-thousandths keep the grid points free of accumulated drift
        (0..count).map(|i| ((start + i as f64 * step) * 1e4).round() / 1e4).collect()
    } else {
        spec.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if grid.is_empty() || grid.iter().any(|b| !b.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}

pub fn sweep_beta(args: &ConfigArgs, grid: &str, seeds: Option<&str>, jobs: usize) -> CmdResult {
    let mut cfg = load_config(args, None)?;
    cfg.settings.estimator.kind = EstimatorKind::ReinMaxRk2;
    cfg.settings.checkpoint_every = 0.0;
    let betas = parse_grid(grid)?;
    let seeds: Vec<u64> = match seeds {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| Failure::Config(format!("bad seed list `{list}`"))))
            .collect::<Result<_, _>>()?,
        None => vec![cfg.settings.seed],
    };
    let (train, _) = load_data(&cfg.data)?;
    let cells = beta_sweep(&cfg.settings, &betas, &seeds, &train, jobs)?;
    let out = cfg.out.clone();
    io(std::fs::create_dir_all(&out), &out)?;
    io(std::fs::write(out.join(CONFIG_ECHO), cfg.render()), &out)?;
    let rows: Vec<MetricsRow> = cells
        .iter()
        .map(|c| {
            let mut row = estimator_row(&cfg.settings, &cfg.settings.estimator.with_beta(c.beta));
            row.seed = c.seed;
            row.epoch = cfg.settings.epochs as f64;
            row.step = cfg.settings.epochs * catgrad::vae::steps_per_epoch(train.len(), cfg.settings.batch_size);
            row.train_neg_elbo = Some(c.train_neg_elbo);
            row
        })
        .collect();
    let path = out.join("beta_sweep.csv");
    write_metrics(&path, &rows)?;
    println!("{:>8} {:>14}", "beta", "mean train");
    let mut best = (f64::NAN, f64::INFINITY);
    for &beta in &betas {
        let vals: Vec<f64> = cells.iter().filter(|c| c.beta == beta).map(|c| c.train_neg_elbo).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("{beta:>8} {mean:>14.6}");
        if mean < best.1 {
            best = (beta, mean);
        }
    }
    println!("argmin beta = {} ({:.6}); wrote {}", best.0, best.1, path.display());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
pub fn verify(
    trials: usize,
    n_min: usize,
    n_max: usize,
    tol: f64,
    seed: u64,
    betas: Option<&str>,
    rk2_form: &str,
    mutate: bool,
) -> CmdResult {
    if n_min < 2 || n_max < n_min || trials == 0 {
        return Err(Failure::Config("need 2 <= n-min <= n-max and trials >= 1".into()));
    }
    let mut opts = VerifyOptions { trials, n_min, n_max, tolerance: tol, seed, mutate, ..VerifyOptions::default() };
    opts.rk2_form = rk2_form.parse()?;
    if let Some(list) = betas {
        opts.betas = parse_grid(list)?;
    }
    let report = verify_identities(&opts)?;
    println!("{:<48} {:>12} {:>4}  verdict", "identity", "max resid", "n");
    for c in &report.checks {
        println!("{:<48} {:>12.3e} {:>4}  {}", c.name, c.max_residual, c.worst_n, if c.passed() { "pass" } else { "FAIL" });
    }
    println!("diagnostics (not part of the verdict):");
    for c in &report.diagnostics {
        println!("{:<48} {:>12.3e} {:>4}  {}", c.name, c.max_residual, c.worst_n, if c.passed() { "holds" } else { "fails" });
    }
    println!(
        "{} in {:.2}s, max residual {:.3e} (tolerance {tol:e})",
        if report.passed() { "PASS" } else { "FAIL" },
        report.elapsed.as_secs_f64(),
        report.max_residual()
    );
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
