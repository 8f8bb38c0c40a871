//! The Straight-Through family: ST, STGS, Gumbel-Rao, ReinMax and its
//! Rao-Blackwellised, control-variate and RK2 variants.

use super::{
    CvConditioning, EstimatorConfig, EstimatorKind, GradEstimate, RaoSecondTerm, Rk2Form, ShiftedLogits,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simplex::{
    argmax_onehot, conditional_gumbel_raw, jacobian_vjp, sample_gumbel, softmax_raw, GumbelVector, Logits,
    OneHot, Temperature,
};

fn check_cotangent(g: &[f64], logits: &Logits) {
    debug_assert_eq!(g.len(), logits.len(), "cotangent and logits lengths differ");
}

/// `gᵀ(diag(π_τ) − π_τ π_τᵀ)`.
pub fn est_st(g: &[f64], logits: &Logits, tau: Temperature) -> GradEstimate {
    check_cotangent(g, logits);
    GradEstimate(jacobian_vjp(&softmax_raw(logits.as_slice(), tau.get()), g))
}

/// `gᵀ d softmax_τ(θ + G)/dθ`.
pub fn est_stgs(g: &[f64], gumbel: &GumbelVector, logits: &Logits, tau: Temperature) -> GradEstimate {
    check_cotangent(g, logits);
    let perturbed: Vec<f64> = logits.as_slice().iter().zip(gumbel.as_slice()).map(|(t, e)| t + e).collect();
    let s = softmax_raw(&perturbed, tau.get());
    let inv_tau = 1.0 / tau.get();
    GradEstimate(jacobian_vjp(&s, g).into_iter().map(|v| v * inv_tau).collect())
}

/// Gumbel-Rao: mean over `k` conditional draws `Y_k ∼ θ + G | D` of
/// `gᵀ d softmax_τ(Y_k)/dY_k`. The derivative stops at `Y`; nothing flows
/// through the conditional sampler.
pub fn est_gumbel_rao(
    g: &[f64],
    d: OneHot,
    logits: &Logits,
    tau: Temperature,
    k: usize,
    rng: &mut Rng,
) -> GradEstimate {
    check_cotangent(g, logits);
    assert!(k >= 1, "Gumbel-Rao needs at least one sample");
    let n = logits.len();
    let mut acc = vec![0.0; n];
    for _ in 0..k {
        let y = conditional_gumbel_raw(logits.as_slice(), d.index(), rng);
        let s = softmax_raw(&y, tau.get());
        for (a, v) in acc.iter_mut().zip(jacobian_vjp(&s, g)) {
            *a += v;
        }
    }
    let scale = 1.0 / (tau.get() * k as f64);
    GradEstimate(acc.into_iter().map(|v| v * scale).collect())
}

/// `θ_D = log((π_τ + D)/2)`.
pub fn make_theta_d(d: OneHot, logits: &Logits, tau: Temperature) -> ShiftedLogits {
    let pi = softmax_raw(logits.as_slice(), tau.get());
    let values = pi.iter().enumerate().map(|(i, p)| ((p + d.at(i)) / 2.0).ln()).collect();
    // π_τ > 0 for finite logits unless the softmax underflows
    ShiftedLogits(Logits::new(values).expect("shifted logits are finite"))
}

/// `2gᵀ(diag(m) − a mᵀ) − c·gᵀ(diag(π) − ππᵀ)` with `m = (π_τ + D)/2`.
/// ReinMax uses `a = m`, `c = 1/2`; RK2 uses `a = βπ + (1 − β)D`, `c = β`.
fn reinmax_kernel(g: &[f64], m: &[f64], a: &[f64], pi: &[f64], c: f64) -> GradEstimate {
    let ga: f64 = g.iter().zip(a).map(|(g, a)| g * a).sum();
    let second = jacobian_vjp(pi, g);
    GradEstimate(
        m.iter()
            .zip(g)
            .zip(second)
            .map(|((m, g), s)| 2.0 * (m * (g - ga)) - c * s)
            .collect(),
    )
}

fn midpoint(pi_tau: &[f64], d: OneHot) -> Vec<f64> {
    pi_tau.iter().enumerate().map(|(i, p)| (p + d.at(i)) / 2.0).collect()
}

/// ReinMax in its direct matrix form. The subtracted term always uses the
/// untempered `π`.
pub fn est_reinmax(g: &[f64], d: OneHot, logits: &Logits, tau: Temperature) -> GradEstimate {
    check_cotangent(g, logits);
    let pi_tau = softmax_raw(logits.as_slice(), tau.get());
    let pi = softmax_raw(logits.as_slice(), 1.0);
    let m = midpoint(&pi_tau, d);
    reinmax_kernel(g, &m, &m, &pi, 0.5)
}

/// ReinMax as `2·ST(D, θ_D) − ½·ST_{τ=1}(D, θ)`; the ST at `θ_D` runs at
/// temperature 1 because `θ_D` already carries `π_τ`.
pub fn est_reinmax_altform(g: &[f64], d: OneHot, logits: &Logits, tau: Temperature) -> GradEstimate {
    let theta_d = make_theta_d(d, logits, tau);
    est_st(g, theta_d.logits(), Temperature::ONE).combine(2.0, &est_st(g, logits, Temperature::ONE), -0.5)
}

/// ReinMax-Argmax: `θ_D` built from `argmax(θ)` instead of the sampled `D`.
pub fn est_reinmax_argmax(g: &[f64], logits: &Logits, tau: Temperature) -> GradEstimate {
    let mode = argmax_onehot(logits.as_slice()).expect("logits are finite");
    est_reinmax_altform(g, mode, logits, tau)
}

/// ReinMax-Rao: the `ST(D, θ_D)` term replaced by Gumbel-Rao at `θ_D`.
pub fn est_reinmax_rao(
    g: &[f64],
    d: OneHot,
    logits: &Logits,
    tau: Temperature,
    k: usize,
    second_term: RaoSecondTerm,
    rng: &mut Rng,
) -> GradEstimate {
    let theta_d = make_theta_d(d, logits, tau);
    let rao = est_gumbel_rao(g, d, theta_d.logits(), tau, k, rng);
    let second = match second_term {
        RaoSecondTerm::ThetaDAsPrinted => est_st(g, theta_d.logits(), tau),
        RaoSecondTerm::Theta => est_st(g, logits, Temperature::ONE),
    };
    rao.combine(2.0, &second, -0.5)
}

/// ReinMax-CV:
/// `c·ST(D, θ_D) − η·STGS_τ(G̃, θ_D) + η·GR_τ(D*, θ_D) − ½·ST(D, θ)`.
///
/// The ReinMax terms run at temperature 1 (so `θ_D` is built from the
/// untempered `π`); `τ` only enters the two control-variate terms.
#[allow(clippy::too_many_arguments)]
pub fn est_reinmax_cv(
    g: &[f64],
    d: OneHot,
    logits: &Logits,
    tau: Temperature,
    eta: f64,
    k: usize,
    config: &EstimatorConfig,
    rng: &mut Rng,
) -> Result<GradEstimate> {
    if !(eta >= 0.0) {
        return Err(Error::Config(format!("eta must be >= 0, got {eta}")));
    }
    let theta_d = make_theta_d(d, logits, Temperature::ONE);
    let lead = config.cv_leading_coeff.value();
    let base = est_st(g, theta_d.logits(), Temperature::ONE).combine(lead, &est_st(g, logits, Temperature::ONE), -0.5);
    if eta == 0.0 {
        return Ok(base);
    }
    let fresh = sample_gumbel(logits.len(), rng);
    let conditioning = match config.cv_conditioning {
        CvConditioning::CoupledFresh => {
            let y: Vec<f64> = theta_d.as_slice().iter().zip(fresh.as_slice()).map(|(t, e)| t + e).collect();
            argmax_onehot(&y)?
        }
        CvConditioning::ReuseOriginal => d,
    };
    let stgs = est_stgs(g, &fresh, theta_d.logits(), tau);
    let rao = est_gumbel_rao(g, conditioning, theta_d.logits(), tau, k, rng);
    let correction = rao.combine(eta, &stgs, -eta);
    Ok(base.combine(1.0, &correction, 1.0))
}

/// ReinMax-RK2(β) at temperature 1:
/// `2gᵀ(diag(m) − (βπ + (1 − β)D) mᵀ) − β·ST_{τ=1}(D, θ)`, `m = (π + D)/2`.
pub fn est_reinmax_rk2(g: &[f64], d: OneHot, logits: &Logits, beta: f64) -> GradEstimate {
    check_cotangent(g, logits);
    let pi = softmax_raw(logits.as_slice(), 1.0);
    let m = midpoint(&pi, d);
    let a: Vec<f64> = pi.iter().enumerate().map(|(i, p)| beta * p + (1.0 - beta) * d.at(i)).collect();
    reinmax_kernel(g, &m, &a, &pi, beta)
}

/// `est_reinmax_rk2` minus `(2β − 1)·gᵀ(D − π)·π`. The subtracted term has
/// expectation `(2β − 1)·π·E_D[gᵀ(D − π)]`, which is the gap between
/// `E_D[est_reinmax_rk2]` and `ref_rk2(β)`; it vanishes at β = 1/2.
pub fn est_reinmax_rk2_centered(g: &[f64], d: OneHot, logits: &Logits, beta: f64) -> GradEstimate {
    let pi = softmax_raw(logits.as_slice(), 1.0);
    let gd: f64 = g[d.index()] - g.iter().zip(&pi).map(|(g, p)| g * p).sum::<f64>();
    let shift = (2.0 * beta - 1.0) * gd;
    let mut out = est_reinmax_rk2(g, d, logits, beta).into_vec();
    for (o, p) in out.iter_mut().zip(&pi) {
        *o -= shift * p;
    }
    GradEstimate(out)
}

/// Sampling artifacts of one slot: the outcome and, for Gumbel-argmax
/// sampling, the perturbation that produced it.
#[derive(Debug, Clone)]
pub struct SlotSample {
    pub d: OneHot,
    pub gumbel: Option<GumbelVector>,
}

/// Dispatch on `config.kind`. `Exact` needs the loss itself and is refused here.
pub fn estimate(
    config: &EstimatorConfig,
    g: &[f64],
    sample: &SlotSample,
    logits: &Logits,
    rng: &mut Rng,
) -> Result<GradEstimate> {
    let d = sample.d;
    let tau = config.tau;
    Ok(match config.kind {
        EstimatorKind::Exact => {
            return Err(Error::Config("the exact gradient needs the loss, not a cotangent".into()))
        }
        EstimatorKind::St => est_st(g, logits, tau),
        EstimatorKind::Stgs => {
            let gumbel = sample
                .gumbel
                .as_ref()
                .ok_or_else(|| Error::Config("STGS needs the Gumbel perturbation of its sample".into()))?;
            est_stgs(g, gumbel, logits, tau)
        }
        EstimatorKind::GumbelRao => est_gumbel_rao(g, d, logits, tau, config.k_samples, rng),
        EstimatorKind::ReinMax => est_reinmax(g, d, logits, tau),
        EstimatorKind::ReinMaxArgmax => est_reinmax_argmax(g, logits, tau),
        EstimatorKind::ReinMaxRao => {
            est_reinmax_rao(g, d, logits, tau, config.k_samples, config.rao_second_term, rng)
        }
        EstimatorKind::ReinMaxCv => {
            est_reinmax_cv(g, d, logits, tau, config.eta, config.k_samples, config, rng)?
        }
        EstimatorKind::ReinMaxRk2 => match config.rk2_form {
            Rk2Form::AsPrinted => est_reinmax_rk2(g, d, logits, config.beta),
            Rk2Form::Centered => est_reinmax_rk2_centered(g, d, logits, config.beta),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::CvLeadingCoeff;
    use crate::rng::{self, stream};
    use crate::simplex::{softmax, softmax_jacobian};

    fn t(v: f64) -> Temperature {
        Temperature::new(v).unwrap()
    }

    fn random_instance(n: usize, rng: &mut Rng) -> (Vec<f64>, OneHot, Logits) {
        let theta = Logits::new((0..n).map(|_| rng::normal(rng)).collect()).unwrap();
        let g = (0..n).map(|_| rng::normal(rng)).collect();
        let d = OneHot::new((rng::uniform_open(rng) * n as f64) as usize, n).unwrap();
        (g, d, theta)
    }

    fn dense_vjp(g: &[f64], probs: &[f64]) -> Vec<f64> {
        let jac = softmax_jacobian(&crate::simplex::Simplex::from_probs(probs.to_vec()));
        (0..g.len()).map(|k| (0..g.len()).map(|i| g[i] * jac[[i, k]]).sum()).collect()
    }

    #[test]
    fn st_by_hand() {
        let theta = Logits::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(est_st(&[1.0, 0.0], &theta, Temperature::ONE).as_slice(), &[0.25, -0.25]);
    }

    #[test]
    fn st_matches_dense_jacobian() {
        let theta = Logits::new(vec![1.0, 2.0, 3.0]).unwrap();
        let g = [2.0, -1.0, 0.0];
        let pi = softmax(&theta, Temperature::ONE);
        let dense = dense_vjp(&g, pi.as_slice());
        let got = est_st(&g, &theta, Temperature::ONE);
        for (a, b) in got.as_slice().iter().zip(&dense) {
            assert!((a - b).abs() < 1e-15);
        }
        // frozen from the dense oracle
        let frozen = [0.185_883_182_650_160_77, -0.228_902_535_550_327_3, 0.043_019_352_900_166_58];
        for (a, b) in got.as_slice().iter().zip(frozen) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn stgs_matches_finite_differences() {
        let mut rng = stream(41, &[]);
        for _ in 0..20 {
            let (g, _, theta) = random_instance(5, &mut rng);
            let gumbel = sample_gumbel(5, &mut rng);
            let tau = t(0.3 + rng::uniform_open(&mut rng));
            let est = est_stgs(&g, &gumbel, &theta, tau);
            let h = 1e-6;
            for k in 0..5 {
                let eval = |delta: f64| {
                    let mut v: Vec<f64> = theta.as_slice().iter().zip(gumbel.as_slice()).map(|(a, b)| a + b).collect();
                    v[k] += delta;
                    let s = softmax_raw(&v, tau.get());
                    g.iter().zip(&s).map(|(g, s)| g * s).sum::<f64>()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                assert!((fd - est.as_slice()[k]).abs() <= 1e-6 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn stgs_shrinks_with_temperature() {
        let theta = Logits::new(vec![0.5, -0.2, 1.0]).unwrap();
        let gumbel = GumbelVector::from_values(vec![0.1, 0.7, -0.3]).unwrap();
        let g = [1.0, -2.0, 0.5];
        let norm = |tau: f64| est_stgs(&g, &gumbel, &theta, t(tau)).as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        // s → uniform, so the Jacobian tends to a constant and the norm to 1/τ
        let (a, b) = (norm(100.0), norm(1000.0));
        assert!((b / a - 0.1).abs() < 1e-2);
        assert!(norm(1e12) < 1e-11);
    }

    #[test]
    fn constant_cotangent_is_annihilated() {
        let mut rng = stream(42, &[]);
        for n in 2..7 {
            let (_, d, theta) = random_instance(n, &mut rng);
            let ones = vec![1.0; n];
            let mut cfg = EstimatorConfig::new(EstimatorKind::St).with_k(7).with_eta(1.3).with_beta(0.3);
            cfg.tau = t(0.7);
            for kind in EstimatorKind::ALL.into_iter().filter(|k| *k != EstimatorKind::Exact) {
                cfg.kind = kind;
                for cond in [CvConditioning::CoupledFresh, CvConditioning::ReuseOriginal] {
                    cfg.cv_conditioning = cond;
                    let sample = SlotSample { d, gumbel: Some(sample_gumbel(n, &mut rng)) };
                    let est = estimate(&cfg, &ones, &sample, &theta, &mut rng).unwrap();
                    assert!(est.as_slice().iter().all(|v| v.abs() < 1e-10), "{kind}: {:?}", est);
                }
            }
        }
    }

    #[test]
    fn gumbel_rao_single_sample_is_conditional_stgs() {
        let theta = Logits::new(vec![0.3, -0.5, 1.1, 0.0]).unwrap();
        let g = [0.5, 1.0, -1.0, 2.0];
        let d = OneHot::new(2, 4).unwrap();
        let gr = est_gumbel_rao(&g, d, &theta, t(0.5), 1, &mut stream(5, &[]));
        let y = conditional_gumbel_raw(theta.as_slice(), 2, &mut stream(5, &[]));
        let gumbel = GumbelVector::from_values(y.iter().zip(theta.as_slice()).map(|(y, t)| y - t).collect()).unwrap();
        let stgs = est_stgs(&g, &gumbel, &theta, t(0.5));
        assert!(gr.max_abs_diff(&stgs) < 1e-12);
    }

    fn replicate_variance(k: usize, reps: usize) -> (f64, f64) {
        let theta = Logits::new(vec![0.4, -0.3, 0.9]).unwrap();
        let g = [1.0, -0.5, 2.0];
        let d = OneHot::new(1, 3).unwrap();
        let mut rng = stream(77, &[k as u64]);
        let samples: Vec<Vec<f64>> =
            (0..reps).map(|_| est_gumbel_rao(&g, d, &theta, t(0.5), k, &mut rng).into_vec()).collect();
        let mean: Vec<f64> = (0..3).map(|c| samples.iter().map(|s| s[c]).sum::<f64>() / reps as f64).collect();
        let sq: Vec<f64> = samples
            .iter()
            .map(|s| s.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
            .collect();
        let var = sq.iter().sum::<f64>() / (reps - 1) as f64;
        let sd_sq = (sq.iter().map(|v| (v - var).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        (var, sd_sq / (reps as f64).sqrt())
    }

    #[test]
    fn gumbel_rao_variance_decreases_with_k() {
        let (v1, e1) = replicate_variance(1, 10_000);
        let (v10, e10) = replicate_variance(10, 10_000);
        let (v100, e100) = replicate_variance(100, 10_000);
        assert!(v10 <= v1 + 2.0 * (e1 + e10));
        assert!(v100 <= v10 + 2.0 * (e10 + e100));
        assert!(v100 < v1);
    }

    /// Logistic-truncation quadrature for `E[σ'(Δ/τ)/τ | D = I_0]` at n = 2.
    /// Given D = I_0 the gap `Y_0 − Y_1` is logistic(θ_0 − θ_1) truncated to (0, ∞).
    pub(crate) fn two_class_rao_oracle(theta: [f64; 2], tau: f64, g: [f64; 2]) -> [f64; 2] {
        let loc = theta[0] - theta[1];
        let logistic_pdf = |x: f64| {
            let e = (-(x - loc)).exp();
            e / (1.0 + e).powi(2)
        };
        let mass = 1.0 / (1.0 + (-loc).exp());
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        // Simpson on [0, 60] in the gap variable
        let steps = 200_000;
        let upper = 60.0 + loc.max(0.0);
        let h = upper / steps as f64;
        let mut total = 0.0;
        for i in 0..=steps {
            let x = i as f64 * h;
            let w = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let s = sig(x / tau);
            total += w * s * (1.0 - s) / tau * logistic_pdf(x);
        }
        let jac = total * h / 3.0 / mass;
        // gᵀ J with J = jac·[[1, −1], [−1, 1]]
        [jac * (g[0] - g[1]), jac * (g[1] - g[0])]
    }

    #[test]
    fn gumbel_rao_converges_to_quadrature_oracle() {
        let theta = Logits::new(vec![0.7, -0.4]).unwrap();
        let g = [1.3, -0.6];
        let d = OneHot::new(0, 2).unwrap();
        let oracle = two_class_rao_oracle([0.7, -0.4], 0.5, g);
        // 40 independent batch means give the Monte-Carlo standard error
        let mut rng = stream(8, &[]);
        let batches: Vec<f64> =
            (0..40).map(|_| est_gumbel_rao(&g, d, &theta, t(0.5), 10_000, &mut rng).as_slice()[0]).collect();
        let mean = batches.iter().sum::<f64>() / 40.0;
        let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 39.0;
        let se = (var / 40.0).sqrt();
        assert!((mean - oracle[0]).abs() < 4.0 * se, "{mean} vs {} (se {se})", oracle[0]);
        assert!(se < 5e-3 * oracle[0].abs());
    }

    #[test]
    fn theta_d_cases() {
        let theta = Logits::new(vec![0.0, 0.0]).unwrap();
        let td = make_theta_d(OneHot::new(0, 2).unwrap(), &theta, Temperature::ONE);
        assert_eq!(td.as_slice(), &[0.75f64.ln(), 0.25f64.ln()]);

        let mut rng = stream(43, &[]);
        let (_, d, theta) = random_instance(5, &mut rng);
        let tau = t(1.3);
        let td = make_theta_d(d, &theta, tau);
        let pi_tau = softmax_raw(theta.as_slice(), 1.3);
        let back = softmax_raw(td.as_slice(), 1.0);
        for i in 0..5 {
            assert!((back[i] - (pi_tau[i] + d.at(i)) / 2.0).abs() <= 1e-12);
            assert!((td.as_slice()[i] - ((pi_tau[i] + d.at(i)) / 2.0).ln()).abs() <= 1e-15);
        }
    }

    #[test]
    fn reinmax_forms_agree() {
        let mut rng = stream(44, &[]);
        for trial in 0..100 {
            let (g, d, theta) = random_instance(2 + trial % 6, &mut rng);
            let a = est_reinmax(&g, d, &theta, Temperature::ONE);
            let b = est_reinmax_altform(&g, d, &theta, Temperature::ONE);
            assert!(a.max_abs_diff(&b) <= 1e-10);
            let a = est_reinmax(&g, d, &theta, t(1.3));
            let b = est_reinmax_altform(&g, d, &theta, t(1.3));
            assert!(a.max_abs_diff(&b) <= 1e-10);
        }
    }

    #[test]
    fn rk2_at_half_is_reinmax_bitwise() {
        let mut rng = stream(45, &[]);
        for trial in 0..200 {
            let (g, d, theta) = random_instance(2 + trial % 7, &mut rng);
            assert_eq!(est_reinmax_rk2(&g, d, &theta, 0.5), est_reinmax(&g, d, &theta, Temperature::ONE));
        }
    }

    #[test]
    fn argmax_variant_ignores_sampled_outcome() {
        let theta = Logits::new(vec![0.2, 1.5, -0.3]).unwrap();
        let g = [0.4, -1.0, 2.0];
        let mode = OneHot::new(1, 3).unwrap();
        assert_eq!(est_reinmax_argmax(&g, &theta, t(1.3)), est_reinmax_altform(&g, mode, &theta, t(1.3)));
        let cfg = EstimatorConfig::new(EstimatorKind::ReinMaxArgmax);
        let mut rng = stream(1, &[]);
        let outs: Vec<GradEstimate> = (0..3)
            .map(|i| {
                let s = SlotSample { d: OneHot::new(i, 3).unwrap(), gumbel: None };
                estimate(&cfg, &g, &s, &theta, &mut rng).unwrap()
            })
            .collect();
        assert!(outs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn cv_with_zero_eta_reduces_to_reinmax_terms() {
        let mut rng = stream(46, &[]);
        let (g, d, theta) = random_instance(4, &mut rng);
        for coeff in [CvLeadingCoeff::AsPrinted, CvLeadingCoeff::FactorTwo] {
            let mut cfg = EstimatorConfig::new(EstimatorKind::ReinMaxCv).with_eta(0.0);
            cfg.cv_leading_coeff = coeff;
            let got = est_reinmax_cv(&g, d, &theta, t(0.1), 0.0, 10, &cfg, &mut rng).unwrap();
            let td = make_theta_d(d, &theta, Temperature::ONE);
            let expect = est_st(&g, td.logits(), Temperature::ONE)
                .combine(coeff.value(), &est_st(&g, &theta, Temperature::ONE), -0.5);
            assert!(got.max_abs_diff(&expect) < 1e-15);
        }
        // at c = 2 and τ = 1 this is ReinMax itself
        let mut cfg = EstimatorConfig::new(EstimatorKind::ReinMaxCv);
        cfg.cv_leading_coeff = CvLeadingCoeff::FactorTwo;
        let got = est_reinmax_cv(&g, d, &theta, Temperature::ONE, 0.0, 1, &cfg, &mut rng).unwrap();
        assert!(got.max_abs_diff(&est_reinmax(&g, d, &theta, Temperature::ONE)) < 1e-12);
        assert!(est_reinmax_cv(&g, d, &theta, t(1.0), -1.0, 1, &cfg, &mut rng).is_err());
    }

    #[test]
    fn cv_correction_is_mean_zero_when_coupled() {
        let theta = Logits::new(vec![0.5, -0.7, 0.1]).unwrap();
        let g = [1.0, -2.0, 0.7];
        let d = OneHot::new(0, 3).unwrap();
        let tau = t(0.5);
        let td = make_theta_d(d, &theta, Temperature::ONE);
        let reps = 10_000;
        let mut rng = stream(47, &[]);
        let mut sum = [0.0; 3];
        let mut sumsq = [0.0; 3];
        for _ in 0..reps {
            let fresh = sample_gumbel(3, &mut rng);
            let y: Vec<f64> = td.as_slice().iter().zip(fresh.as_slice()).map(|(a, b)| a + b).collect();
            let dstar = argmax_onehot(&y).unwrap();
            let corr = est_gumbel_rao(&g, dstar, td.logits(), tau, 10_000, &mut rng)
                .combine(1.0, &est_stgs(&g, &fresh, td.logits(), tau), -1.0);
            for c in 0..3 {
                sum[c] += corr.as_slice()[c];
                sumsq[c] += corr.as_slice()[c].powi(2);
            }
        }
        let n = reps as f64;
        let mean_norm = sum.iter().map(|s| (s / n).powi(2)).sum::<f64>().sqrt();
        let se = sum
            .iter()
            .zip(&sumsq)
            .map(|(s, q)| (q / n - (s / n).powi(2)) / n)
            .sum::<f64>()
            .sqrt();
        assert!(mean_norm <= 5.0 * se, "{mean_norm} vs se {se}");
    }

    #[test]
    fn rao_variants_differ_only_in_second_term() {
        let mut rng = stream(48, &[]);
        let (g, d, theta) = random_instance(4, &mut rng);
        let tau = t(0.8);
        let a = est_reinmax_rao(&g, d, &theta, tau, 5, RaoSecondTerm::ThetaDAsPrinted, &mut stream(9, &[]));
        let b = est_reinmax_rao(&g, d, &theta, tau, 5, RaoSecondTerm::Theta, &mut stream(9, &[]));
        let td = make_theta_d(d, &theta, tau);
        let delta = est_st(&g, &theta, Temperature::ONE).combine(-0.5, &est_st(&g, td.logits(), tau), 0.5);
        assert!(b.combine(1.0, &a, -1.0).max_abs_diff(&delta) < 1e-12);
    }

    #[test]
    fn rao_large_k_matches_quadrature() {
        // regression pin: K = 10⁴ against the logistic quadrature evaluated at θ_D
        let theta = Logits::new(vec![0.2, -0.9]).unwrap();
        let g = [0.8, -1.1];
        let d = OneHot::new(1, 2).unwrap();
        let td = make_theta_d(d, &theta, Temperature::ONE);
        let est = est_reinmax_rao(&g, d, &theta, Temperature::ONE, 10_000, RaoSecondTerm::Theta, &mut stream(10, &[]));
        // D = I_1: swap coordinates so the oracle conditions on index 0
        let sw = two_class_rao_oracle([td.as_slice()[1], td.as_slice()[0]], 1.0, [g[1], g[0]]);
        let rao = [sw[1], sw[0]];
        let st = est_st(&g, &theta, Temperature::ONE);
        for c in 0..2 {
            let expect = 2.0 * rao[c] - 0.5 * st.as_slice()[c];
            assert!((est.as_slice()[c] - expect).abs() < 0.01 * expect.abs().max(1e-2), "{:?} vs {expect}", est);
        }
    }

    #[test]
    fn estimate_refuses_exact_and_missing_gumbel() {
        let theta = Logits::new(vec![0.0, 1.0]).unwrap();
        let s = SlotSample { d: OneHot::new(0, 2).unwrap(), gumbel: None };
        let mut rng = stream(0, &[]);
        assert!(estimate(&EstimatorConfig::new(EstimatorKind::Exact), &[1.0, 0.0], &s, &theta, &mut rng).is_err());
        assert!(estimate(&EstimatorConfig::new(EstimatorKind::Stgs), &[1.0, 0.0], &s, &theta, &mut rng).is_err());
    }
}
