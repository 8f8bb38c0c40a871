//! Categorical and Gumbel primitives shared by every estimator.
//!
//! All probabilities are computed in `f64` with max-shift stabilisation.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Unnormalised log-scores of one categorical slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain(format!(
                "logits need at least 2 classes, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite logit {bad}")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A point on the probability simplex. Only softmax-style operations build one.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn from_probs(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Categorical outcome `I_index` in an `n`-class space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OneHot {
    index: usize,
    n: usize,
}

impl OneHot {
    pub fn new(index: usize, n: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::Domain(format!("one-hot index {index} out of range for n = {n}")));
        }
        Ok(Self { index, n })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize) -> f64 {
        if i == self.index {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i)).collect()
    }
}

/// i.i.d. Gumbel(0, 1) perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelVector(Vec<f64>);

impl GumbelVector {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite Gumbel entry".into()));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A draw of `θ + G` conditioned on `argmax(θ + G) = index`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedLogits {
    values: Vec<f64>,
    index: usize,
}

impl PerturbedLogits {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Softmax temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
        }
        Ok(Self(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

pub(crate) fn softmax_raw(values: &[f64], tau: f64) -> Vec<f64> {
    let scaled: Vec<f64> = values.iter().map(|v| v / tau).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scaled.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `softmax(θ / τ)`.
pub fn softmax(logits: &Logits, tau: Temperature) -> Simplex {
    Simplex(softmax_raw(logits.as_slice(), tau.get()))
}

/// Softmax of an arbitrary vector; rejects non-finite entries.
pub fn softmax_values(values: &[f64], tau: Temperature) -> Result<Simplex> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("softmax input must be non-empty and finite".into()));
    }
    Ok(Simplex(softmax_raw(values, tau.get())))
}

/// Dense `diag(π) − ππᵀ`.
pub fn softmax_jacobian(pi: &Simplex) -> Array2<f64> {
    let p = pi.as_slice();
    let n = p.len();
    Array2::from_shape_fn((n, n), |(i, j)| {
        let diag = if i == j { p[i] } else { 0.0 };
        diag - p[i] * p[j]
    })
}

/// `gᵀ(diag(p) − ppᵀ)` without forming the matrix.
pub(crate) fn jacobian_vjp(probs: &[f64], g: &[f64]) -> Vec<f64> {
    let gp: f64 = probs.iter().zip(g).map(|(p, gi)| p * gi).sum();
    probs.iter().zip(g).map(|(p, gi)| p * (gi - gp)).collect()
}

/// `log Σ exp(θ_i)`.
pub fn log_partition(logits: &Logits) -> f64 {
    log_sum_exp(logits.as_slice())
}

/// Inverse-CDF draw of `D ∼ π`.
pub fn sample_categorical(pi: &Simplex, rng: &mut Rng) -> OneHot {
    let p = pi.as_slice();
    let u = rng::uniform_open(rng);
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &pi_i) in p.iter().enumerate() {
        if pi_i > 0.0 {
            last_positive = i;
        }
        acc += pi_i;
        if u < acc {
            return OneHot { index: i, n: p.len() };
        }
    }
    // cumulative sum fell short of u through rounding
    OneHot { index: last_positive, n: p.len() }
}

fn gumbel(rng: &mut Rng) -> f64 {
    -(-rng::uniform_open(rng).ln()).ln()
}

/// `n` i.i.d. Gumbel(0, 1) variates.
pub fn sample_gumbel(n: usize, rng: &mut Rng) -> GumbelVector {
    GumbelVector((0..n).map(|_| gumbel(rng)).collect())
}

/// Gumbel-argmax: returns `(argmax(θ + G), G)`.
pub fn gumbel_argmax_sample(logits: &Logits, rng: &mut Rng) -> (OneHot, GumbelVector) {
    let g = sample_gumbel(logits.len(), rng);
    let perturbed: Vec<f64> = logits.as_slice().iter().zip(g.as_slice()).map(|(t, g)| t + g).collect();
    let d = argmax_unchecked(&perturbed);
    (d, g)
}

pub(crate) fn conditional_gumbel_raw(theta: &[f64], index: usize, rng: &mut Rng) -> Vec<f64> {
    let log_z = log_sum_exp(theta);
    loop {
        let log_e_top = rng::exp1(rng).ln();
        let top = -log_e_top + log_z;
        let mut values = Vec::with_capacity(theta.len());
        for (j, &t) in theta.iter().enumerate() {
            if j == index {
                values.push(top);
            } else {
                // −log(E_j / e^{θ_j} + E_i / Z) in log space
                let a = rng::exp1(rng).ln() - t;
                let b = log_e_top - log_z;
                let m = a.max(b);
                values.push(-(m + ((a - m).exp() + (b - m).exp()).ln()));
            }
        }
        let ok = values
            .iter()
            .enumerate()
            .all(|(j, &v)| j == index || v < top);
        if ok {
            return values;
        }
    }
}

/// Sample `Y = θ + G` given `argmax(θ + G) = index(d)`.
pub fn conditional_gumbel_sample(logits: &Logits, d: OneHot, rng: &mut Rng) -> PerturbedLogits {
    debug_assert_eq!(logits.len(), d.n());
    PerturbedLogits {
        values: conditional_gumbel_raw(logits.as_slice(), d.index(), rng),
        index: d.index(),
    }
}

fn argmax_unchecked(v: &[f64]) -> OneHot {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    OneHot { index: best, n: v.len() }
}

/// Index of the maximum entry; ties go to the lowest index.
pub fn argmax_onehot(v: &[f64]) -> Result<OneHot> {
    if v.is_empty() {
        return Err(Error::Domain("argmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("argmax of a non-finite vector".into()));
    }
    Ok(argmax_unchecked(v))
}
