//! Exact gradient and the first/second-order/RK2 reference approximations.
//!
//! These enumerate all `n` vertices and are only meant as oracles.

use super::{GradEstimate, LossOracle};
use crate::error::{Error, Result};
use crate::simplex::{softmax, softmax_jacobian, Logits, Temperature};

pub const EXACT_LIMIT: usize = 64;

fn vertex(i: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn guard(loss: &dyn LossOracle, logits: &Logits) -> Result<usize> {
    let n = logits.len();
    if n > EXACT_LIMIT {
        return Err(Error::EnumerationTooLarge { n, limit: EXACT_LIMIT });
    }
    if loss.dim() != n {
        return Err(Error::Shape(format!("loss dimension {} vs {} logits", loss.dim(), n)));
    }
    Ok(n)
}

/// `Σ_i c_i dπ_i/dθ`, reading `dπ_i/dθ` off row `i` of the dense Jacobian.
fn weight_rows(logits: &Logits, coeffs: &[f64]) -> GradEstimate {
    let jac = softmax_jacobian(&softmax(logits, Temperature::ONE));
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    for (i, c) in coeffs.iter().enumerate() {
        for k in 0..n {
            out[k] += c * jac[[i, k]];
        }
    }
    GradEstimate(out)
}

/// `Σ_i f(I_i) dπ_i/dθ`.
pub fn exact_gradient(loss: &dyn LossOracle, logits: &Logits) -> Result<GradEstimate> {
    let n = guard(loss, logits)?;
    let values: Vec<f64> = (0..n).map(|i| loss.eval(&vertex(i, n))).collect();
    Ok(weight_rows(logits, &values))
}

/// The baseline-subtracted double sum `Σ_i Σ_j π_j (f(I_i) − f(I_j)) dπ_i/dθ`.
pub fn exact_gradient_baseline(loss: &dyn LossOracle, logits: &Logits) -> Result<GradEstimate> {
    let n = guard(loss, logits)?;
    let pi = softmax(logits, Temperature::ONE);
    let values: Vec<f64> = (0..n).map(|i| loss.eval(&vertex(i, n))).collect();
    let coeffs: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| pi.as_slice()[j] * (values[i] - values[j])).sum())
        .collect();
    Ok(weight_rows(logits, &coeffs))
}

/// `∂f(I_j)/∂I_j · (I_i − I_j)` reduces to `h_j[i] − h_j[j]`.
fn directional(h: &[Vec<f64>], at: usize, i: usize, j: usize) -> f64 {
    h[at][i] - h[at][j]
}

fn vertex_grads(loss: &dyn LossOracle, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| loss.grad(&vertex(i, n))).collect()
}

/// Forward-Euler approximation: `f(I_i) − f(I_j) ≈ ∂f(I_j)/∂I_j · (I_i − I_j)`.
pub fn ref_first_order(loss: &dyn LossOracle, logits: &Logits) -> Result<GradEstimate> {
    let n = guard(loss, logits)?;
    let pi = softmax(logits, Temperature::ONE);
    let h = vertex_grads(loss, n);
    let coeffs: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| pi.as_slice()[j] * directional(&h, j, i, j)).sum())
        .collect();
    Ok(weight_rows(logits, &coeffs))
}

/// Heun / trapezoid approximation using both endpoint gradients.
pub fn ref_second_order(loss: &dyn LossOracle, logits: &Logits) -> Result<GradEstimate> {
    let n = guard(loss, logits)?;
    let pi = softmax(logits, Temperature::ONE);
    let h = vertex_grads(loss, n);
    let coeffs: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| pi.as_slice()[j] / 2.0 * (directional(&h, j, i, j) + directional(&h, i, i, j)))
                .sum()
        })
        .collect();
    Ok(weight_rows(logits, &coeffs))
}

/// Second-order Runge-Kutta family: endpoint weights `(1 − β, β)`.
pub fn ref_rk2(loss: &dyn LossOracle, logits: &Logits, beta: f64) -> Result<GradEstimate> {
    let n = guard(loss, logits)?;
    let pi = softmax(logits, Temperature::ONE);
    let h = vertex_grads(loss, n);
    let coeffs: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    pi.as_slice()[j] * ((1.0 - beta) * directional(&h, j, i, j) + beta * directional(&h, i, i, j))
                })
                .sum()
        })
        .collect();
    Ok(weight_rows(logits, &coeffs))
}

/// `E_D[est_reinmax_rk2(β)] − ref_rk2(β) = (2β − 1)·π·Σ_i π_i ∂f(I_i)/∂I_i·(I_i − π)`.
///
/// The double sum `Σ_i Σ_j π_i π_j ((1 − β)h_j + βh_i)(I_i − I_j)` equals
/// `(2β − 1)·Σ_i π_i h_i(I_i − π)` and is only antisymmetric at β = 1/2.
pub fn rk2_expectation_gap(loss: &dyn LossOracle, logits: &Logits, beta: f64) -> Result<GradEstimate> {
    let n = guard(loss, logits)?;
    let pi = softmax(logits, Temperature::ONE);
    let pi = pi.as_slice();
    let h = vertex_grads(loss, n);
    let s: f64 = (0..n)
        .map(|i| pi[i] * (h[i][i] - h[i].iter().zip(pi).map(|(a, b)| a * b).sum::<f64>()))
        .sum();
    Ok(GradEstimate(pi.iter().map(|p| (2.0 * beta - 1.0) * s * p).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{LinearLoss, QuadraticLoss};
    use crate::rng::{self, stream};
    use crate::simplex::jacobian_vjp;

    fn random_logits(n: usize, rng: &mut crate::rng::Rng) -> Logits {
        Logits::new((0..n).map(|_| rng::normal(rng)).collect()).unwrap()
    }

    #[test]
    fn constant_loss_gives_zero() {
        let loss = LinearLoss { c: vec![0.0; 4] };
        let constant = crate::estimators::FnLoss { n: 4, f: |_: &[f64]| 3.0, df: |_: &[f64]| vec![0.0; 4] };
        let theta = Logits::new(vec![0.2, -0.4, 1.0, 0.0]).unwrap();
        for g in [
            exact_gradient(&constant, &theta).unwrap(),
            exact_gradient_baseline(&constant, &theta).unwrap(),
            ref_first_order(&loss, &theta).unwrap(),
            ref_second_order(&loss, &theta).unwrap(),
        ] {
            assert!(g.as_slice().iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn two_class_hand_enumeration() {
        // f(I_1) = 1, f(I_2) = 0 at θ = 0: dπ_1/dθ = [1/4, −1/4]
        let loss = LinearLoss { c: vec![1.0, 0.0] };
        let g = exact_gradient(&loss, &Logits::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(g.as_slice(), &[0.25, -0.25]);
    }

    #[test]
    fn linear_exact_matches_closed_form() {
        let mut rng = stream(31, &[]);
        for n in 2..8 {
            let c: Vec<f64> = (0..n).map(|_| rng::normal(&mut rng)).collect();
            let theta = random_logits(n, &mut rng);
            let pi = softmax(&theta, Temperature::ONE);
            let closed = jacobian_vjp(pi.as_slice(), &c);
            let g = exact_gradient(&LinearLoss { c }, &theta).unwrap();
            for (a, b) in g.as_slice().iter().zip(closed) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn baseline_form_matches_exact() {
        let mut rng = stream(32, &[]);
        for trial in 0..100 {
            let n = 2 + trial % 6;
            let loss = QuadraticLoss::random(n, &mut rng);
            let theta = random_logits(n, &mut rng);
            let a = exact_gradient(&loss, &theta).unwrap();
            let b = exact_gradient_baseline(&loss, &theta).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-10);
        }
    }

    #[test]
    fn baseline_antisymmetry() {
        let loss = LinearLoss { c: vec![1.0, -1.0] };
        let g = exact_gradient_baseline(&loss, &Logits::new(vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(g.as_slice()[0], -g.as_slice()[1]);
    }

    #[test]
    fn euler_and_trapezoid_exactness() {
        let mut rng = stream(33, &[]);
        for trial in 0..100 {
            let n = 2 + trial % 5;
            let theta = random_logits(n, &mut rng);
            let lin = LinearLoss { c: (0..n).map(|_| rng::normal(&mut rng)).collect() };
            let exact_lin = exact_gradient(&lin, &theta).unwrap();
            assert!(ref_first_order(&lin, &theta).unwrap().max_abs_diff(&exact_lin) <= 1e-10);
            for beta in [-0.2, 0.0, 0.3, 1.0, 1.2] {
                assert!(ref_rk2(&lin, &theta, beta).unwrap().max_abs_diff(&exact_lin) <= 1e-10);
            }
            let quad = QuadraticLoss::random(n, &mut rng);
            let exact_quad = exact_gradient(&quad, &theta).unwrap();
            assert!(ref_second_order(&quad, &theta).unwrap().max_abs_diff(&exact_quad) <= 1e-10);
        }
    }

    #[test]
    fn rk2_endpoints() {
        let mut rng = stream(34, &[]);
        let quad = QuadraticLoss::random(5, &mut rng);
        let theta = random_logits(5, &mut rng);
        assert_eq!(ref_rk2(&quad, &theta, 0.5).unwrap(), ref_second_order(&quad, &theta).unwrap());
        assert!(ref_rk2(&quad, &theta, 0.0).unwrap().max_abs_diff(&ref_first_order(&quad, &theta).unwrap()) <= 1e-15);
    }

    #[test]
    fn guard_refuses_large_n() {
        let loss = LinearLoss { c: vec![0.0; EXACT_LIMIT + 1] };
        let theta = Logits::new(vec![0.0; EXACT_LIMIT + 1]).unwrap();
        assert!(matches!(exact_gradient(&loss, &theta), Err(Error::EnumerationTooLarge { .. })));
    }
}
