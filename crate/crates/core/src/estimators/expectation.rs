//! Brute-force `E_D[estimator]` by enumerating every outcome of `D`.
//!
//! Deterministic estimators are evaluated once per outcome. Those that draw
//! Gumbel noise get an inner Monte-Carlo mean over `mc_budget` draws per
//! outcome, and the result carries a per-coordinate standard error.

use super::{
    est_gumbel_rao, est_reinmax, est_reinmax_argmax, est_reinmax_cv, est_reinmax_rao, est_reinmax_rk2, est_reinmax_rk2_centered,
    est_st, est_stgs, exact_gradient, EstimatorConfig, EstimatorKind, GradEstimate, LossOracle, Rk2Form,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::simplex::{conditional_gumbel_raw, softmax_raw, GumbelVector, Logits, OneHot};

pub const ENUMERATION_LIMIT: usize = 16;

#[derive(Debug, Clone)]
pub struct Expectation {
    pub mean: GradEstimate,
    /// Zero for deterministic estimators.
    pub std_err: Vec<f64>,
}

fn one_draw(
    config: &EstimatorConfig,
    g: &[f64],
    d: OneHot,
    logits: &Logits,
    rng: &mut Rng,
) -> Result<GradEstimate> {
    Ok(match config.kind {
        EstimatorKind::Stgs => {
            // G distributed as its law given argmax(θ + G) = d
            let y = conditional_gumbel_raw(logits.as_slice(), d.index(), rng);
            let gumbel = GumbelVector::from_values(y.iter().zip(logits.as_slice()).map(|(y, t)| y - t).collect())?;
            est_stgs(g, &gumbel, logits, config.tau)
        }
        EstimatorKind::GumbelRao => est_gumbel_rao(g, d, logits, config.tau, config.k_samples, rng),
        EstimatorKind::ReinMaxRao => {
            est_reinmax_rao(g, d, logits, config.tau, config.k_samples, config.rao_second_term, rng)
        }
        EstimatorKind::ReinMaxCv => {
            est_reinmax_cv(g, d, logits, config.tau, config.eta, config.k_samples, config, rng)?
        }
        EstimatorKind::St => est_st(g, logits, config.tau),
        EstimatorKind::ReinMax => est_reinmax(g, d, logits, config.tau),
        EstimatorKind::ReinMaxArgmax => est_reinmax_argmax(g, logits, config.tau),
        EstimatorKind::ReinMaxRk2 => match config.rk2_form {
            Rk2Form::AsPrinted => est_reinmax_rk2(g, d, logits, config.beta),
            Rk2Form::Centered => est_reinmax_rk2_centered(g, d, logits, config.beta),
        },
        EstimatorKind::Exact => unreachable!("handled by the caller"),
    })
}

/// `Σ_i π_i · est(∂f(I_i)/∂I_i, I_i, θ)`.
pub fn enumerate_expectation(
    config: &EstimatorConfig,
    loss: &dyn LossOracle,
    logits: &Logits,
    mc_budget: usize,
    rng: &mut Rng,
) -> Result<Expectation> {
    config.validate()?;
    let n = logits.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { n, limit: ENUMERATION_LIMIT });
    }
    if loss.dim() != n {
        return Err(Error::Shape(format!("loss dimension {} vs {} logits", loss.dim(), n)));
    }
    if config.kind == EstimatorKind::Exact {
        return Ok(Expectation { mean: exact_gradient(loss, logits)?, std_err: vec![0.0; n] });
    }
    let draws = if config.kind.is_stochastic() { mc_budget.max(2) } else { 1 };
    let pi = softmax_raw(logits.as_slice(), 1.0);
    let mut mean = vec![0.0; n];
    let mut var_of_mean = vec![0.0; n];
    for (i, &p) in pi.iter().enumerate() {
        let d = OneHot::new(i, n)?;
        let g = loss.grad(&d.to_vec());
        let mut sum = vec![0.0; n];
        let mut sumsq = vec![0.0; n];
        for _ in 0..draws {
            let est = one_draw(config, &g, d, logits, rng)?;
            for (k, v) in est.as_slice().iter().enumerate() {
                sum[k] += v;
                sumsq[k] += v * v;
            }
        }
        let m = draws as f64;
        for k in 0..n {
            let inner_mean = sum[k] / m;
            mean[k] += p * inner_mean;
            if draws > 1 {
                let inner_var = ((sumsq[k] - m * inner_mean * inner_mean) / (m - 1.0)).max(0.0);
                var_of_mean[k] += p * p * inner_var / m;
            }
        }
    }
    Ok(Expectation {
        mean: GradEstimate(mean),
        std_err: var_of_mean.into_iter().map(f64::sqrt).collect(),
    })
}

/// `Σ_i π_i · est(∂f(I_i)/∂I_i, I_i)` for any deterministic estimator.
pub fn enumerate_with(
    loss: &dyn LossOracle,
    logits: &Logits,
    est: impl Fn(&[f64], OneHot) -> GradEstimate,
) -> Result<GradEstimate> {
    let n = logits.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge { n, limit: ENUMERATION_LIMIT });
    }
    if loss.dim() != n {
        return Err(Error::Shape(format!("loss dimension {} vs {} logits", loss.dim(), n)));
    }
    let pi = softmax_raw(logits.as_slice(), 1.0);
    let mut mean = vec![0.0; n];
    for (i, p) in pi.iter().enumerate() {
        let d = OneHot::new(i, n)?;
        for (m, v) in mean.iter_mut().zip(est(&loss.grad(&d.to_vec()), d).as_slice()) {
            *m += p * v;
        }
    }
    Ok(GradEstimate(mean))
}

/// Convenience for the deterministic estimators: no generator needed.
pub fn enumerate_deterministic(
    config: &EstimatorConfig,
    loss: &dyn LossOracle,
    logits: &Logits,
) -> Result<GradEstimate> {
    if config.kind.is_stochastic() {
        return Err(Error::Config(format!("{} needs a Monte-Carlo budget", config.kind)));
    }
    let mut unused = rng::stream(0, &[]);
    Ok(enumerate_expectation(config, loss, logits, 1, &mut unused)?.mean)
}
