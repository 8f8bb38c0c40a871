//! Discrete-latent VAE: `L` categorical slots of `n` classes each, a uniform
//! prior, Bernoulli pixels, and a training step that routes the encoder-logit
//! gradient through a chosen estimator.

use ndarray::{s, Array2, Array3, ArrayView2};

use crate::data::{epoch_order, Batch, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorConfig, EstimatorKind, GradEstimate, SlotSample};
use crate::nn::{
    bernoulli_nll, init_params, kl_uniform_categorical, mlp_backward, mlp_forward, MlpCache, MlpParams, OptimizerState,
    ParamGrads,
};
use crate::rng::{self, Rng};
use crate::simplex::{gumbel_argmax_sample, jacobian_vjp, sample_categorical, softmax, softmax_raw, Logits, Temperature};

pub const ENCODER_HIDDEN: [usize; 2] = [512, 256];
pub const DECODER_HIDDEN: [usize; 2] = [256, 512];

/// Joint enumeration of `nᴸ` latent configurations is used for the exact
/// gradient up to this many configurations; beyond it each slot is
/// marginalised with the others held at their samples.
pub const JOINT_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    /// Categories per slot.
    pub n: usize,
    /// Number of latent slots.
    pub latents: usize,
}

impl VaeModel {
    /// Fresh 784-pixel model with the standard hidden sizes.
    pub fn new(rng: &mut Rng, n: usize, latents: usize) -> Result<Self> {
        Self::with_sizes(rng, n, latents, crate::data::PIXELS, &ENCODER_HIDDEN, &DECODER_HIDDEN)
    }

    pub fn with_sizes(
        rng: &mut Rng,
        n: usize,
        latents: usize,
        pixels: usize,
        encoder_hidden: &[usize],
        decoder_hidden: &[usize],
    ) -> Result<Self> {
        if n < 2 || latents == 0 {
            return Err(Error::Config(format!("need n ≥ 2 and L ≥ 1, got n = {n}, L = {latents}")));
        }
        let code = n * latents;
        let enc: Vec<usize> = std::iter::once(pixels).chain(encoder_hidden.iter().copied()).chain([code]).collect();
        let dec: Vec<usize> = std::iter::once(code).chain(decoder_hidden.iter().copied()).chain([pixels]).collect();
        let encoder = init_params(rng, &enc)?;
        let decoder = init_params(rng, &dec)?;
        Self::from_parts(encoder, decoder, n, latents)
    }

    pub fn from_parts(encoder: MlpParams, decoder: MlpParams, n: usize, latents: usize) -> Result<Self> {
        let code = n * latents;
        if encoder.output_dim() != code || decoder.input_dim() != code || encoder.input_dim() != decoder.output_dim() {
            return Err(Error::Shape(format!(
                "encoder {:?} / decoder {:?} do not fit {latents} slots of {n}",
                encoder.dims(),
                decoder.dims()
            )));
        }
        Ok(Self { encoder, decoder, n, latents })
    }

    pub fn pixels(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.n * self.latents
    }

    /// Encoder tensors followed by decoder tensors.
    pub fn tensor_lengths(&self) -> Vec<usize> {
        self.encoder.tensors().iter().chain(self.decoder.tensors().iter()).map(|t| t.len()).collect()
    }

    pub fn new_optimizer(&self, kind: crate::nn::OptimizerKind, lr: f64) -> Result<OptimizerState> {
        OptimizerState::new(kind, lr, &self.tensor_lengths())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.images().ncols() != self.pixels() {
            return Err(Error::Shape(format!("images have {} pixels, model expects {}", batch.images().ncols(), self.pixels())));
        }
        Ok(())
    }
}

/// Per-image negative-ELBO terms in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboBreakdown {
    pub recon_nll: f64,
    pub kl: f64,
    pub neg_elbo: f64,
}

impl ElboBreakdown {
    fn new(recon_nll: f64, kl: f64) -> Self {
        Self { recon_nll, kl, neg_elbo: recon_nll + kl }
    }
}

/// Sampled one-hot codes (`B × L·n`) and the per-slot sampling artifacts,
/// slot `(b, l)` at index `b·L + l`.
#[derive(Debug, Clone)]
pub struct Latents {
    pub onehots: Array2<f64>,
    pub samples: Vec<SlotSample>,
}

fn encode_flat(model: &VaeModel, batch: &Batch) -> Result<(Array2<f64>, MlpCache)> {
    model.check_batch(batch)?;
    mlp_forward(&model.encoder, batch.images())
}

/// Encoder logits reshaped to `(B, L, n)`.
pub fn encode(model: &VaeModel, batch: &Batch) -> Result<Array3<f64>> {
    let (flat, _) = encode_flat(model, batch)?;
    let b = flat.nrows();
    Ok(flat.into_shape_with_order((b, model.latents, model.n)).expect("encoder output is L·n wide"))
}

fn slot_logits(flat: &Array2<f64>, n: usize, b: usize, l: usize) -> &[f64] {
    &flat.row(b).to_slice().expect("row-major")[l * n..(l + 1) * n]
}

/// One-hot sample per slot. STGS draws through the Gumbel argmax and keeps
/// `G`; every other kind samples `D ∼ softmax(θ)` directly.
pub fn sample_latents(logits: &Array3<f64>, rng: &mut Rng, kind: EstimatorKind) -> Result<Latents> {
    let (b, l, n) = logits.dim();
    let mut onehots = Array2::zeros((b, l * n));
    let mut samples = Vec::with_capacity(b * l);
    for bi in 0..b {
        for li in 0..l {
            let theta = Logits::new(logits.slice(s![bi, li, ..]).to_vec())?;
            let sample = if kind.needs_gumbel() {
                let (d, g) = gumbel_argmax_sample(&theta, rng);
                SlotSample { d, gumbel: Some(g) }
            } else {
                SlotSample { d: sample_categorical(&softmax(&theta, Temperature::ONE), rng), gumbel: None }
            };
            onehots[[bi, li * n + sample.d.index()]] = 1.0;
            samples.push(sample);
        }
    }
    Ok(Latents { onehots, samples })
}

fn per_row_nll(pixel_logits: ArrayView2<f64>, images: ArrayView2<f64>) -> Result<Vec<f64>> {
    (0..pixel_logits.nrows())
        .map(|r| Ok(bernoulli_nll(pixel_logits.slice(s![r..r + 1, ..]), images.slice(s![r..r + 1, ..]))?.0))
        .collect()
}

/// Reconstruction NLL of every image at the given codes.
pub fn recon_nll_per_image(model: &VaeModel, batch: &Batch, codes: ArrayView2<f64>) -> Result<Vec<f64>> {
    let (pixel_logits, _) = mlp_forward(&model.decoder, codes)?;
    per_row_nll(pixel_logits.view(), batch.images())
}

/// `∂(Σ_b recon_b / B)/∂D` at the given codes, from one decoder
/// forward and backward pass.
pub fn recon_cotangent(model: &VaeModel, batch: &Batch, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (pixel_logits, cache) = mlp_forward(&model.decoder, codes)?;
    let (_, mut pix_grad) = bernoulli_nll(pixel_logits.view(), batch.images())?;
    pix_grad /= batch.len() as f64;
    Ok(mlp_backward(&model.decoder, &cache, pix_grad.view())?.0)
}

fn kl_total(model: &VaeModel, flat: &Array2<f64>) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(flat.dim());
    let mut total = 0.0;
    for b in 0..flat.nrows() {
        for l in 0..model.latents {
            let (kl, g) = kl_uniform_categorical(slot_logits(flat, model.n, b, l));
            total += kl;
            grad.slice_mut(s![b, l * model.n..(l + 1) * model.n]).assign(&ndarray::Array1::from(g));
        }
    }
    (total, grad)
}

/// Per-image ELBO terms at the given sampled codes, KL taken analytically.
pub fn elbo(model: &VaeModel, batch: &Batch, latents: &Latents) -> Result<ElboBreakdown> {
    let (flat, _) = encode_flat(model, batch)?;
    if latents.onehots.dim() != flat.dim() {
        return Err(Error::Shape("latent codes do not match the encoder output".into()));
    }
    let b = batch.len() as f64;
    let recon: f64 = recon_nll_per_image(model, batch, latents.onehots.view())?.iter().sum();
    let (kl, _) = kl_total(model, &flat);
    Ok(ElboBreakdown::new(recon / b, kl / b))
}

/// `∂(Σ_b recon_b / B)/∂θ` for every slot, by enumeration. With `nᴸ ≤`
/// [`JOINT_LIMIT`] the expectation is over all slots at once; otherwise slot
/// `l` is enumerated with the other slots fixed at `codes`.
pub fn exact_logit_grad(model: &VaeModel, batch: &Batch, flat: &Array2<f64>, codes: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (bsz, n, l) = (batch.len(), model.n, model.latents);
    let scale = 1.0 / bsz as f64;
    let probs: Vec<Vec<f64>> = (0..bsz * l).map(|k| softmax_raw(slot_logits(flat, n, k / l, k % l), 1.0)).collect();
    // coeffs[(b·L + l)·n + i] = E[recon_b | slot l = i]
    let mut coeffs = vec![0.0; bsz * l * n];
    let joint = n.checked_pow(l as u32).filter(|c| *c <= JOINT_LIMIT);
    if let Some(configs) = joint {
        for c in 0..configs {
            let digits: Vec<usize> = (0..l).scan(c, |rest, _| {
                let d = *rest % n;
                *rest /= n;
                Some(d)
            })
            .collect();
            let mut code = Array2::zeros((bsz, l * n));
            for b in 0..bsz {
                for (li, d) in digits.iter().enumerate() {
                    code[[b, li * n + d]] = 1.0;
                }
            }
            let f = recon_nll_per_image(model, batch, code.view())?;
            for b in 0..bsz {
                for (li, &d) in digits.iter().enumerate() {
                    let others: f64 = digits
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| *t != li)
                        .map(|(t, dt)| probs[b * l + t][*dt])
                        .product();
                    coeffs[(b * l + li) * n + d] += others * f[b];
                }
            }
        }
    } else {
        for li in 0..l {
            for i in 0..n {
                let mut code = codes.to_owned();
                code.slice_mut(s![.., li * n..(li + 1) * n]).fill(0.0);
                code.column_mut(li * n + i).fill(1.0);
                let f = recon_nll_per_image(model, batch, code.view())?;
                for b in 0..bsz {
                    coeffs[(b * l + li) * n + i] = f[b];
                }
            }
        }
    }
    let mut grad = Array2::zeros((bsz, l * n));
    for b in 0..bsz {
        for li in 0..l {
            let k = b * l + li;
            let g = jacobian_vjp(&probs[k], &coeffs[k * n..(k + 1) * n]);
            for (i, v) in g.into_iter().enumerate() {
                grad[[b, li * n + i]] = v * scale;
            }
        }
    }
    Ok(grad)
}

/// Full gradient of the per-image negative ELBO at one set of samples.
#[derive(Debug, Clone)]
pub struct VaeGrads {
    pub encoder: ParamGrads,
    pub decoder: ParamGrads,
    /// `∂loss/∂θ` as assembled from the estimator plus the KL term.
    pub logits: Array2<f64>,
    /// `∂loss/∂D` from the decoder backward pass.
    pub cotangent: Array2<f64>,
    pub elbo: ElboBreakdown,
}

/// Forward with the sampled codes, one backward pass to `∂loss/∂D`, the
/// estimator per slot, and the encoder backward pass.
pub fn gradients(
    model: &VaeModel,
    batch: &Batch,
    latents: &Latents,
    config: &EstimatorConfig,
    rng: &mut Rng,
) -> Result<VaeGrads> {
    let (flat, enc_cache) = encode_flat(model, batch)?;
    let (bsz, n, l) = (batch.len(), model.n, model.latents);
    if latents.onehots.dim() != flat.dim() || latents.samples.len() != bsz * l {
        return Err(Error::Shape("latent codes do not match the encoder output".into()));
    }
    let scale = 1.0 / bsz as f64;
    let (pixel_logits, dec_cache) = mlp_forward(&model.decoder, latents.onehots.view())?;
    let (recon, mut pix_grad) = bernoulli_nll(pixel_logits.view(), batch.images())?;
    pix_grad *= scale;
    let (cotangent, decoder) = mlp_backward(&model.decoder, &dec_cache, pix_grad.view())?;
    let (kl, kl_grad) = kl_total(model, &flat);

    let mut logit_grad = if config.kind == EstimatorKind::Exact {
        exact_logit_grad(model, batch, &flat, latents.onehots.view())?
    } else {
        let mut out = Array2::zeros(flat.dim());
        for b in 0..bsz {
            for li in 0..l {
                let theta = Logits::new(slot_logits(&flat, n, b, li).to_vec())?;
                let g = &cotangent.row(b).to_slice().expect("row-major")[li * n..(li + 1) * n];
                let est: GradEstimate = estimate(config, g, &latents.samples[b * l + li], &theta, rng)?;
                out.slice_mut(s![b, li * n..(li + 1) * n]).assign(&ndarray::ArrayView1::from(est.as_slice()));
            }
        }
        out
    };
    logit_grad.scaled_add(scale, &kl_grad);
    let (_, encoder) = mlp_backward(&model.encoder, &enc_cache, logit_grad.view())?;
    Ok(VaeGrads {
        encoder,
        decoder,
        logits: logit_grad,
        cotangent,
        elbo: ElboBreakdown::new(recon * scale, kl * scale),
    })
}

/// Sample, differentiate and take one optimizer step. Returns the per-image
/// ELBO terms at the sampled codes before the update.
pub fn train_step(
    model: &mut VaeModel,
    batch: &Batch,
    config: &EstimatorConfig,
    opt: &mut OptimizerState,
    rng: &mut Rng,
) -> Result<ElboBreakdown> {
    let logits = encode(model, batch)?;
    let latents = sample_latents(&logits, rng, config.kind)?;
    let grads = gradients(model, batch, &latents, config, rng)?;
    if !grads.elbo.neg_elbo.is_finite() {
        return Err(Error::NonFinite { step: opt.t, detail: format!("neg_elbo = {}", grads.elbo.neg_elbo) });
    }
    let g: Vec<&[f64]> = grads.encoder.tensors().into_iter().chain(grads.decoder.tensors()).collect();
    if let Some(bad) = g.iter().flat_map(|t| t.iter()).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: opt.t, detail: format!("gradient entry {bad}") });
    }
    let p: Vec<&mut [f64]> = model.encoder.tensors_mut().into_iter().chain(model.decoder.tensors_mut()).collect();
    opt.step(p, g)?;
    Ok(grads.elbo)
}

const EVAL_TAG: u64 = 0x4556_414c;

/// Mean per-image ELBO terms over the whole dataset, one fresh latent sample
/// per image drawn from a stream keyed by `seed`.
pub fn evaluate(model: &VaeModel, dataset: &Dataset, batch_size: usize, seed: u64) -> Result<ElboBreakdown> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng::stream(seed, &[EVAL_TAG]);
    let (mut recon, mut kl) = (0.0, 0.0);
    let total = dataset.len() as f64;
    for chunk in (0..dataset.len()).collect::<Vec<_>>().chunks(batch_size.max(1)) {
        let batch = dataset.gather(chunk);
        let logits = encode(model, &batch)?;
        let latents = sample_latents(&logits, &mut rng, EstimatorKind::St)?;
        let e = elbo(model, &batch, &latents)?;
        recon += e.recon_nll * batch.len() as f64;
        kl += e.kl * batch.len() as f64;
    }
    Ok(ElboBreakdown::new(recon / total, kl / total))
}

/// Knobs of a training run that do not live in the model or optimizer.
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub estimator: EstimatorConfig,
    pub batch_size: usize,
    /// Keys the per-epoch shuffle.
    pub data_seed: u64,
    /// Stochastically binarize every batch before the step.
    pub binarize: bool,
}

/// Everything that evolves during training. Resuming from a copy of this
/// state continues the run bit-identically.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: VaeModel,
    pub opt: OptimizerState,
    pub rng: Rng,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Running sum and count of the per-step negative ELBO in the current epoch.
    pub epoch_sum: f64,
    pub epoch_count: u64,
}

/// Train metric reported when an epoch completes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochEnd {
    /// 1-based index of the completed epoch.
    pub epoch: u64,
    pub step: u64,
    pub train_neg_elbo: f64,
}

pub fn steps_per_epoch(len: usize, batch_size: usize) -> u64 {
    len.div_ceil(batch_size.max(1)) as u64
}

impl Trainer {
    pub fn new(model: VaeModel, opt: OptimizerState, rng: Rng) -> Self {
        Self { model, opt, rng, step: 0, epoch_sum: 0.0, epoch_count: 0 }
    }

    /// Completed epochs, possibly fractional.
    pub fn epochs_done(&self, spe: u64) -> f64 {
        self.step as f64 / spe as f64
    }

    /// Runs `steps` optimizer steps, returning the epochs completed on the way.
    pub fn advance(&mut self, spec: &TrainSpec, dataset: &Dataset, steps: u64) -> Result<Vec<EpochEnd>> {
        let spe = steps_per_epoch(dataset.len(), spec.batch_size);
        let mut ends = Vec::new();
        let mut order: Option<(u64, Vec<Vec<usize>>)> = None;
        for _ in 0..steps {
            let epoch = self.step / spe;
            if order.as_ref().map(|(e, _)| *e) != Some(epoch) {
                order = Some((epoch, epoch_order(dataset.len(), spec.batch_size, spec.data_seed, epoch)?));
            }
            let idx = &order.as_ref().expect("just set").1[(self.step % spe) as usize];
            let mut batch = dataset.gather(idx);
            if spec.binarize {
                batch = batch.binarized(&mut self.rng);
            }
            let e = train_step(&mut self.model, &batch, &spec.estimator, &mut self.opt, &mut self.rng)?;
            self.step += 1;
            self.epoch_sum += e.neg_elbo;
            self.epoch_count += 1;
            if self.step % spe == 0 {
                ends.push(EpochEnd {
                    epoch: self.step / spe,
                    step: self.step,
                    train_neg_elbo: self.epoch_sum / self.epoch_count as f64,
                });
                self.epoch_sum = 0.0;
                self.epoch_count = 0;
            }
        }
        Ok(ends)
    }
}

/// Encoder output as flat `(B, L·n)` logits.
pub fn encode_flat_logits(model: &VaeModel, batch: &Batch) -> Result<Array2<f64>> {
    Ok(encode_flat(model, batch)?.0)
}
