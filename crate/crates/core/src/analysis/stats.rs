//! Bias (cosine to the exact gradient) and variance (trace of the sample
//! covariance) of estimators on a frozen model and a fixed batch.
//!
//! All estimators share the replicates: replicate `r` draws one set of codes
//! by Gumbel-argmax, takes one decoder backward pass to `∂loss/∂D`, and every
//! estimator is then applied to that cotangent with its own stream keyed by
//! `(seed, r, estimator index)`.

use ndarray::{s, Array2};

use super::sweep::parallel_map;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorKind};
use crate::rng;
use crate::simplex::Logits;
use crate::vae::{encode_flat_logits, exact_logit_grad, recon_cotangent, sample_latents, VaeModel};

pub const EXACT_OUTER_SAMPLES: usize = 16;
const EXACT_TAG: u64 = 0x4558_4143;
const SAMPLE_TAG: u64 = 0x5341_4d50;
const EST_TAG: u64 = 0x4553_5449;
/// Replicates are processed in this many fixed chunks. The chunks are the
/// unit of parallel work and the batch means behind `var_std_err`.
const CHUNKS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub estimator: EstimatorConfig,
    pub m: usize,
    pub bias_cosine: f64,
    pub sample_var: f64,
    pub sample_std: f64,
    pub exact_grad_norm: f64,
    /// Batch-means standard error of `sample_var`.
    pub var_std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureOptions {
    pub m: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { m: 1024, seed: 0, jobs: 1 }
    }
}

/// Bias/variance set: everything at τ = 1 except ReinMax-CV at τ = 0.1, η = 1.5.
pub fn bias_variance_estimators() -> Vec<EstimatorConfig> {
    let mut out: Vec<EstimatorConfig> = [EstimatorKind::Exact, EstimatorKind::St, EstimatorKind::ReinMax, EstimatorKind::ReinMaxRao]
        .into_iter()
        .map(EstimatorConfig::new)
        .collect();
    out.push(EstimatorConfig::new(EstimatorKind::ReinMaxCv).with_tau(0.1).expect("positive").with_eta(1.5));
    out
}

/// ST, ReinMax and ReinMax-Argmax at τ = 1.3.
pub fn spread_estimators() -> Vec<EstimatorConfig> {
    [EstimatorKind::St, EstimatorKind::ReinMax, EstimatorKind::ReinMaxArgmax]
        .into_iter()
        .map(|k| EstimatorConfig::new(k).with_tau(1.3).expect("positive"))
        .collect()
}

/// Mean over `EXACT_OUTER_SAMPLES` codes of the per-slot exact logit
/// gradient (reconstruction term only, scaled by 1/B).
pub fn exact_reference(model: &VaeModel, batch: &Batch, seed: u64) -> Result<Array2<f64>> {
    let flat = encode_flat_logits(model, batch)?;
    let logits3 = flat.clone().into_shape_with_order((batch.len(), model.latents, model.n)).expect("L·n wide");
    let mut acc = Array2::zeros(flat.dim());
    for s in 0..EXACT_OUTER_SAMPLES {
        let mut rng = rng::stream(seed, &[EXACT_TAG, s as u64]);
        let codes = sample_latents(&logits3, &mut rng, EstimatorKind::St)?;
        acc += &exact_logit_grad(model, batch, &flat, codes.onehots.view())?;
    }
    acc /= EXACT_OUTER_SAMPLES as f64;
    Ok(acc)
}

/// Per-coordinate running mean and sum of squared deviations.
#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, q), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / c;
            *q += delta * (v - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    fn trace_var(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.m2.iter().sum::<f64>() / (self.count - 1) as f64
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

fn chunk_bounds(m: usize) -> Vec<(usize, usize)> {
    let chunks = CHUNKS.min(m / 2).max(1);
    (0..chunks).map(|c| (c * m / chunks, (c + 1) * m / chunks)).collect()
}

/// Bias and variance of every config in `configs` from `opts.m` shared
/// replicates. `Exact` is reported as cosine 1 and variance 0.
pub fn measure(model: &VaeModel, batch: &Batch, configs: &[EstimatorConfig], opts: MeasureOptions) -> Result<Vec<StatsReport>> {
    if opts.m < 2 {
        return Err(Error::Config(format!("need at least 2 replicates, got {}", opts.m)));
    }
    for c in configs {
        c.validate()?;
    }
    let exact = exact_reference(model, batch, opts.seed)?;
    let exact_flat = exact.as_slice().expect("standard layout").to_vec();
    let exact_norm = exact_flat.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(exact_norm > 0.0) {
        return Err(Error::ZeroExactGradient);
    }
    let flat = encode_flat_logits(model, batch)?;
    let (bsz, n, l) = (batch.len(), model.n, model.latents);
    let logits3 = flat.clone().into_shape_with_order((bsz, l, n)).expect("L·n wide");
    let slot_logits: Vec<Logits> = (0..bsz * l)
        .map(|k| Logits::new(flat.slice(s![k / l, (k % l) * n..(k % l + 1) * n]).to_vec()))
        .collect::<Result<_>>()?;
    let dim = flat.len();
    let sampled: Vec<usize> = (0..configs.len()).filter(|&i| configs[i].kind != EstimatorKind::Exact).collect();

    let chunks = chunk_bounds(opts.m);
    let per_chunk = parallel_map(chunks.len(), opts.jobs, |c| -> Result<Vec<Moments>> {
        let mut moments = vec![Moments::new(dim); sampled.len()];
        let mut buf = vec![0.0; dim];
        for r in chunks[c].0..chunks[c].1 {
            let mut rng = rng::stream(opts.seed, &[SAMPLE_TAG, r as u64]);
            let latents = sample_latents(&logits3, &mut rng, EstimatorKind::Stgs)?;
            let cot = recon_cotangent(model, batch, latents.onehots.view())?;
            let cot = cot.as_slice().expect("standard layout");
            for (slot, &ci) in sampled.iter().enumerate() {
                let mut est_rng = rng::stream(opts.seed, &[EST_TAG, r as u64, ci as u64]);
                for k in 0..bsz * l {
                    let span = k * n..(k + 1) * n;
                    let e = estimate(&configs[ci], &cot[span.clone()], &latents.samples[k], &slot_logits[k], &mut est_rng)?;
                    buf[span].copy_from_slice(e.as_slice());
                }
                moments[slot].push(&buf);
            }
        }
        Ok(moments)
    });
    let per_chunk: Vec<Vec<Moments>> = per_chunk.into_iter().collect::<Result<_>>()?;

    let mut reports = Vec::with_capacity(configs.len());
    for (ci, cfg) in configs.iter().enumerate() {
        let report = if cfg.kind == EstimatorKind::Exact {
            StatsReport {
                estimator: *cfg,
                m: opts.m,
                bias_cosine: 1.0,
                sample_var: 0.0,
                sample_std: 0.0,
                exact_grad_norm: exact_norm,
                var_std_err: 0.0,
            }
        } else {
            let slot = sampled.iter().position(|&s| s == ci).expect("sampled config");
            let mut total = Moments::new(dim);
            for chunk in &per_chunk {
                total.merge(&chunk[slot]);
            }
            let var = total.trace_var();
            let batch_vars: Vec<f64> = per_chunk.iter().map(|c| c[slot].trace_var()).collect();
            let var_std_err = if batch_vars.len() > 1 && batch_vars.iter().all(|v| v.is_finite()) {
                let k = batch_vars.len() as f64;
                let mean = batch_vars.iter().sum::<f64>() / k;
                (batch_vars.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
            } else {
                f64::NAN
            };
            StatsReport {
                estimator: *cfg,
                m: opts.m,
                bias_cosine: cosine(&exact_flat, &total.mean),
                sample_var: var,
                sample_std: var.sqrt(),
                exact_grad_norm: exact_norm,
                var_std_err,
            }
        };
        reports.push(report);
    }
    Ok(reports)
}

pub fn measure_bias(model: &VaeModel, batch: &Batch, config: &EstimatorConfig, opts: MeasureOptions) -> Result<f64> {
    Ok(measure(model, batch, std::slice::from_ref(config), opts)?[0].bias_cosine)
}

/// `(sample_var, sample_std)`.
pub fn measure_variance(model: &VaeModel, batch: &Batch, config: &EstimatorConfig, opts: MeasureOptions) -> Result<(f64, f64)> {
    let r = &measure(model, batch, std::slice::from_ref(config), opts)?[0];
    Ok((r.sample_var, r.sample_std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merged_moments_match_sequential() {
        let mut rng = rng::stream(5, &[]);
        let xs: Vec<Vec<f64>> = (0..37).map(|_| (0..3).map(|_| rng::normal(&mut rng)).collect()).collect();
        let mut seq = Moments::new(3);
        xs.iter().for_each(|x| seq.push(x));
        let mut merged = Moments::new(3);
        for part in xs.chunks(10) {
            let mut m = Moments::new(3);
            part.iter().for_each(|x| m.push(x));
            merged.merge(&m);
        }
        assert_eq!(merged.count, 37);
        for i in 0..3 {
            assert!((merged.mean[i] - seq.mean[i]).abs() < 1e-12);
            assert!((merged.m2[i] - seq.m2[i]).abs() < 1e-10);
        }
        // two-pass oracle for the trace
        let mean: Vec<f64> = (0..3).map(|i| xs.iter().map(|x| x[i]).sum::<f64>() / 37.0).collect();
        let trace: f64 = xs.iter().map(|x| (0..3).map(|i| (x[i] - mean[i]).powi(2)).sum::<f64>()).sum::<f64>() / 36.0;
        assert!((merged.trace_var() - trace).abs() < 1e-10);
    }

    #[test]
    fn chunks_cover_the_range() {
        for m in [2, 3, 17, 1024] {
            let b = chunk_bounds(m);
            assert_eq!(b[0].0, 0);
            assert_eq!(b.last().unwrap().1, m);
            assert!(b.windows(2).all(|w| w[0].1 == w[1].0));
            assert!(b.iter().all(|(a, z)| z - a >= 1));
        }
    }

    #[test]
    fn estimator_sets() {
        let f = bias_variance_estimators();
        assert_eq!(f.len(), 5);
        assert!(f.iter().all(|c| (c.tau.get() - if c.kind == EstimatorKind::ReinMaxCv { 0.1 } else { 1.0 }).abs() < 1e-15));
        assert!(spread_estimators().iter().all(|c| c.tau.get() == 1.3));
    }
}
