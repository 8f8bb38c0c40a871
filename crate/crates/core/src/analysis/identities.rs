use std::time::{Duration, Instant};

use crate::error::Result;
use crate::estimators::{
    enumerate_deterministic, enumerate_with, est_reinmax, est_reinmax_rk2_centered, est_st, exact_gradient,
    ref_first_order, ref_rk2, ref_second_order, rk2_expectation_gap, EstimatorConfig, EstimatorKind, GradEstimate,
    LinearLoss, QuadraticLoss, Rk2Form,
};
use crate::rng::{self, Rng};
use crate::simplex::{Logits, Temperature};

const TRIAL_TAG: u64 = 0x5645_5249;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub n_min: usize,
    pub n_max: usize,
    pub trials: usize,
    pub betas: Vec<f64>,
    pub tolerance: f64,
    pub seed: u64,
    /// Swap ReinMax for a copy with its second coefficient off by one.
    pub mutate: bool,
    pub rk2_form: Rk2Form,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 6,
            trials: 100,
            betas: vec![-0.2, 0.0, 0.25, 0.5, 2.0 / 3.0, 1.0, 1.2],
            tolerance: 1e-9,
            seed: 0,
            mutate: false,
            rk2_form: Rk2Form::AsPrinted,
        }
    }
}

/// Worst residual of one identity over every `(n, trial)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub worst_n: usize,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self { name: name.into(), max_residual: 0.0, worst_n: 0, tolerance }
    }

    fn record(&mut self, n: usize, a: &GradEstimate, b: &GradEstimate) {
        let r = a.max_abs_diff(b);
        // NaN must fail
        if !(r <= self.max_residual) {
            self.max_residual = r;
            self.worst_n = n;
        }
    }

    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// Reported but not part of the verdict.
    pub diagnostics: Vec<Check>,
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.max_residual).fold(0.0, f64::max)
    }
}

fn random_logits(n: usize, rng: &mut Rng) -> Result<Logits> {
    Logits::new((0..n).map(|_| rng::normal(rng)).collect())
}

fn fmt_beta(beta: f64) -> String {
    let s = format!("{beta:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Enumerates `E_D[estimator]` for ST, ReinMax and ReinMax-RK2(β) at τ = 1
/// against the reference approximations, plus the Euler and trapezoid
/// exactness lemmas, on random quadratic losses.
pub fn verify_identities(opts: &VerifyOptions) -> Result<VerifyReport> {
    let start = Instant::now();
    let tol = opts.tolerance;
    let mut st = Check::new("E[st] = first-order", tol);
    let mut reinmax = Check::new("E[reinmax] = second-order", tol);
    let mut rk2: Vec<Check> = opts
        .betas
        .iter()
        .map(|b| Check::new(format!("E[reinmax-rk2({})] = rk2({})", fmt_beta(*b), fmt_beta(*b)), tol))
        .collect();
    let mut rk2_half = Check::new("rk2(0.5) = second-order", tol);
    let mut euler = Check::new("first-order exact on linear", tol);
    let mut trapezoid = Check::new("second-order exact on quadratic", tol);
    let mut gap: Vec<Check> = opts
        .betas
        .iter()
        .map(|b| Check::new(format!("E[reinmax-rk2({})] = rk2 + (2b-1)-gap", fmt_beta(*b)), tol))
        .collect();
    let mut centered: Vec<Check> = opts
        .betas
        .iter()
        .map(|b| Check::new(format!("E[reinmax-rk2-centered({})] = rk2({})", fmt_beta(*b), fmt_beta(*b)), tol))
        .collect();

    let st_cfg = EstimatorConfig::new(EstimatorKind::St);
    for n in opts.n_min..=opts.n_max {
        for trial in 0..opts.trials {
            let mut rng = rng::stream(opts.seed, &[TRIAL_TAG, n as u64, trial as u64]);
            let theta = random_logits(n, &mut rng)?;
            let quad = QuadraticLoss::random(n, &mut rng);
            let lin = LinearLoss { c: (0..n).map(|_| rng::normal(&mut rng)).collect() };

            st.record(n, &enumerate_deterministic(&st_cfg, &quad, &theta)?, &ref_first_order(&quad, &theta)?);
            let second = ref_second_order(&quad, &theta)?;
            let e_reinmax = if opts.mutate {
                // second coefficient −3/2 instead of −1/2
                enumerate_with(&quad, &theta, |g, d| {
                    est_reinmax(g, d, &theta, Temperature::ONE).combine(1.0, &est_st(g, &theta, Temperature::ONE), -1.0)
                })?
            } else {
                enumerate_with(&quad, &theta, |g, d| est_reinmax(g, d, &theta, Temperature::ONE))?
            };
            reinmax.record(n, &e_reinmax, &second);
            rk2_half.record(n, &ref_rk2(&quad, &theta, 0.5)?, &second);

            for (i, &beta) in opts.betas.iter().enumerate() {
                let cfg = EstimatorConfig { rk2_form: opts.rk2_form, ..EstimatorConfig::new(EstimatorKind::ReinMaxRk2) }
                    .with_beta(beta);
                let e = enumerate_deterministic(&cfg, &quad, &theta)?;
                let reference = ref_rk2(&quad, &theta, beta)?;
                rk2[i].record(n, &e, &reference);
                let printed = enumerate_deterministic(
                    &EstimatorConfig::new(EstimatorKind::ReinMaxRk2).with_beta(beta),
                    &quad,
                    &theta,
                )?;
                gap[i].record(n, &printed, &reference.combine(1.0, &rk2_expectation_gap(&quad, &theta, beta)?, 1.0));
                let c = enumerate_with(&quad, &theta, |g, d| est_reinmax_rk2_centered(g, d, &theta, beta))?;
                centered[i].record(n, &c, &reference);
            }

            euler.record(n, &ref_first_order(&lin, &theta)?, &exact_gradient(&lin, &theta)?);
            trapezoid.record(n, &second, &exact_gradient(&quad, &theta)?);
        }
    }

    let mut checks = vec![st, reinmax];
    checks.extend(rk2);
    checks.extend([rk2_half, euler, trapezoid]);
    let mut diagnostics = gap;
    diagnostics.extend(centered);
    Ok(VerifyReport { checks, diagnostics, elapsed: start.elapsed() })
}

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub worst_index: usize,
}

/// Central differences at step `h` against `analytic`, relative error
/// `|a − fd| / max(|a|, |fd|, floor)`.
pub fn gradcheck(f: impl Fn(&[f64]) -> f64, analytic: &[f64], x: &[f64], h: f64) -> GradcheckReport {
    assert_eq!(analytic.len(), x.len(), "gradient and point differ in length");
    let mut probe = x.to_vec();
    let mut worst = GradcheckReport { max_rel_err: 0.0, worst_index: 0 };
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let a = analytic[i];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(GRADCHECK_FLOOR);
        if !(err <= worst.max_rel_err) {
            worst = GradcheckReport { max_rel_err: err, worst_index: i };
        }
    }
    worst
}
