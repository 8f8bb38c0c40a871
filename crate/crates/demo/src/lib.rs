//! Three interactive operations for the static page in `www/`. Each takes
//! plain numbers and returns a JSON string; the page draws the results.

use catgrad::estimators::{
    enumerate_with, est_reinmax, est_reinmax_rk2, est_reinmax_rk2_centered, est_st, exact_gradient, ref_first_order,
    ref_rk2, ref_second_order, GradEstimate, QuadraticLoss,
};
use catgrad::rng::stream;
use catgrad::simplex::{argmax_onehot, conditional_gumbel_sample, gumbel_argmax_sample, Logits, Temperature};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_N: usize = 12;
const MAX_DRAWS: usize = 200_000;

fn logits(theta: &[f64]) -> Result<Logits, String> {
    if theta.len() < 2 || theta.len() > MAX_N {
        return Err(format!("need 2 to {MAX_N} logits, got {}", theta.len()));
    }
    Logits::new(theta.to_vec()).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Expectations {
    pub exact: Vec<f64>,
    pub first_order: Vec<f64>,
    pub second_order: Vec<f64>,
    pub st: Vec<f64>,
    pub reinmax: Vec<f64>,
    pub rk2_reference: Vec<f64>,
    pub rk2: Vec<f64>,
    pub rk2_centered: Vec<f64>,
}

/// Enumerated `E_D[·]` of ST, ReinMax and ReinMax-RK2(β) next to the exact
/// gradient and its reference approximations, for a random quadratic loss.
pub fn expectations(theta: &[f64], loss_seed: u64, beta: f64) -> Result<Expectations, String> {
    let theta = logits(theta)?;
    if !beta.is_finite() {
        return Err("beta must be finite".into());
    }
    let n = theta.len();
    let loss = QuadraticLoss::random(n, &mut stream(loss_seed, &[n as u64]));
    let v = |g: catgrad::Result<GradEstimate>| g.map(GradEstimate::into_vec).map_err(|e| e.to_string());
    Ok(Expectations {
        exact: v(exact_gradient(&loss, &theta))?,
        first_order: v(ref_first_order(&loss, &theta))?,
        second_order: v(ref_second_order(&loss, &theta))?,
        st: v(enumerate_with(&loss, &theta, |g, _| est_st(g, &theta, Temperature::ONE)))?,
        reinmax: v(enumerate_with(&loss, &theta, |g, d| est_reinmax(g, d, &theta, Temperature::ONE)))?,
        rk2_reference: v(ref_rk2(&loss, &theta, beta))?,
        rk2: v(enumerate_with(&loss, &theta, |g, d| est_reinmax_rk2(g, d, &theta, beta)))?,
        rk2_centered: v(enumerate_with(&loss, &theta, |g, d| est_reinmax_rk2_centered(g, d, &theta, beta)))?,
    })
}

#[derive(Debug, Serialize)]
pub struct BetaCurve {
    pub beta: Vec<f64>,
    /// `|E[rk2(β)] − rk2 reference(β)|∞` for the estimator as written.
    pub gap: Vec<f64>,
    /// The same for the centered form.
    pub gap_centered: Vec<f64>,
}

/// RK2 residual over `steps + 1` evenly spaced β in `[lo, hi]`.
pub fn beta_curve(theta: &[f64], loss_seed: u64, lo: f64, hi: f64, steps: usize) -> Result<BetaCurve, String> {
    let theta = logits(theta)?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo && (1..=400).contains(&steps)) {
        return Err("need finite lo < hi and 1 to 400 steps".into());
    }
    let n = theta.len();
    let loss = QuadraticLoss::random(n, &mut stream(loss_seed, &[n as u64]));
    let mut curve = BetaCurve { beta: Vec::new(), gap: Vec::new(), gap_centered: Vec::new() };
    for i in 0..=steps {
        let beta = lo + (hi - lo) * i as f64 / steps as f64;
        let reference = ref_rk2(&loss, &theta, beta).map_err(|e| e.to_string())?;
        let printed = enumerate_with(&loss, &theta, |g, d| est_reinmax_rk2(g, d, &theta, beta)).map_err(|e| e.to_string())?;
        let centered =
            enumerate_with(&loss, &theta, |g, d| est_reinmax_rk2_centered(g, d, &theta, beta)).map_err(|e| e.to_string())?;
        curve.beta.push(beta);
        curve.gap.push(printed.max_abs_diff(&reference));
        curve.gap_centered.push(centered.max_abs_diff(&reference));
    }
    Ok(curve)
}

#[derive(Debug, Serialize)]
pub struct GumbelHistogram {
    /// Argmax frequencies of `θ + G`.
    pub one_stage: Vec<f64>,
    /// Argmax frequencies after drawing `D ∼ softmax(θ)` then `θ + G | D`.
    pub two_stage: Vec<f64>,
    pub probs: Vec<f64>,
    /// Histogram of `G_k` under the two-stage sampler, on `[edges[i], edges[i+1])`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Draws where the conditional sample's argmax differed from `D`.
    pub violations: u64,
}

/// Compares the one-stage and two-stage Gumbel samplers and histograms the
/// noise on coordinate `k`.
pub fn gumbel_histogram(theta: &[f64], k: usize, draws: usize, seed: u64) -> Result<GumbelHistogram, String> {
    let theta = logits(theta)?;
    let n = theta.len();
    if k >= n || draws == 0 || draws > MAX_DRAWS {
        return Err(format!("need k < {n} and 1 to {MAX_DRAWS} draws"));
    }
    let probs = catgrad::simplex::softmax(&theta, Temperature::ONE).as_slice().to_vec();
    let mut rng = stream(seed, &[]);
    let (mut one, mut two) = (vec![0u64; n], vec![0u64; n]);
    let edges: Vec<f64> = (0..=40).map(|i| -3.0 + 0.25 * i as f64).collect();
    let mut counts = vec![0u64; edges.len() - 1];
    let mut violations = 0;
    for _ in 0..draws {
        one[gumbel_argmax_sample(&theta, &mut rng).0.index()] += 1;
        let (d, _) = gumbel_argmax_sample(&theta, &mut rng);
        let y = conditional_gumbel_sample(&theta, d, &mut rng);
        let top = argmax_onehot(y.as_slice()).map_err(|e| e.to_string())?.index();
        two[top] += 1;
        violations += (top != d.index()) as u64;
        let g = y.as_slice()[k] - theta.as_slice()[k];
        if let Some(bin) = edges.windows(2).position(|w| g >= w[0] && g < w[1]) {
            counts[bin] += 1;
        }
    }
    let freq = |c: Vec<u64>| c.into_iter().map(|x| x as f64 / draws as f64).collect();
    Ok(GumbelHistogram { one_stage: freq(one), two_stage: freq(two), probs, edges, counts, violations })
}

fn json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e)).and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen(js_name = expectations)]
pub fn expectations_js(theta: Vec<f64>, loss_seed: u32, beta: f64) -> Result<String, JsError> {
    json(expectations(&theta, loss_seed.into(), beta))
}

#[wasm_bindgen(js_name = betaCurve)]
pub fn beta_curve_js(theta: Vec<f64>, loss_seed: u32, lo: f64, hi: f64, steps: usize) -> Result<String, JsError> {
    json(beta_curve(&theta, loss_seed.into(), lo, hi, steps))
}

#[wasm_bindgen(js_name = gumbelHistogram)]
pub fn gumbel_histogram_js(theta: Vec<f64>, k: usize, draws: usize, seed: u32) -> Result<String, JsError> {
    json(gumbel_histogram(&theta, k, draws, seed.into()))
}
