use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::simplex::log_sum_exp;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ softplus(l) − t·l` over every entry, with cotangent `σ(l) − t`.
pub fn bernoulli_nll(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if logits.dim() != targets.dim() {
        return Err(Error::Shape(format!("logits {:?} vs targets {:?}", logits.dim(), targets.dim())));
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Domain(format!("target {t} outside [0, 1]")));
    }
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    Zip::from(&mut grad).and(&logits).and(&targets).for_each(|g, &l, &t| {
        total += softplus(l) - t * l;
        *g = sigmoid(l) - t;
    });
    Ok((total, grad))
}

/// `KL(softmax(θ) ‖ uniform) = log n + Σ q log q` and its gradient
/// `q ⊙ (log q − Σ q log q)`.
pub fn kl_uniform_categorical(logits: &[f64]) -> (f64, Vec<f64>) {
    let n = logits.len();
    let lse = log_sum_exp(logits);
    let log_q: Vec<f64> = logits.iter().map(|t| t - lse).collect();
    let q: Vec<f64> = log_q.iter().map(|l| l.exp()).collect();
    // q underflowing to 0 contributes 0·(finite) = 0
    let neg_entropy: f64 = q.iter().zip(&log_q).map(|(q, l)| q * l).sum();
    let kl = ((n as f64).ln() + neg_entropy).max(0.0);
    let grad = q.iter().zip(&log_q).map(|(q, l)| q * (l - neg_entropy)).collect();
    (kl, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, stream};
    use ndarray::array;

    #[test]
    fn nll_closed_forms() {
        let (v, g) = bernoulli_nll(array![[0.0, 0.0]].view(), array![[0.5, 0.5]].view()).unwrap();
        assert!((v - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, array![[0.0, 0.0]]);
        let (v, g) = bernoulli_nll(array![[40.0, -800.0]].view(), array![[1.0, 0.0]].view()).unwrap();
        assert!(v.is_finite() && v < 1e-17);
        assert!(g.iter().all(|x| x.abs() < 1e-17));
        let (v, _) = bernoulli_nll(array![[800.0]].view(), array![[0.0]].view()).unwrap();
        assert_eq!(v, 800.0);
    }

    #[test]
    fn nll_rejects_bad_targets() {
        assert!(bernoulli_nll(array![[0.0]].view(), array![[1.5]].view()).is_err());
        assert!(bernoulli_nll(array![[0.0, 1.0]].view(), array![[0.5]].view()).is_err());
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut rng = stream(7, &[]);
        for _ in 0..20 {
            let l = Array2::from_shape_simple_fn((2, 5), || 3.0 * rng::normal(&mut rng));
            let t = Array2::from_shape_simple_fn((2, 5), || rng::uniform_open(&mut rng));
            let (_, g) = bernoulli_nll(l.view(), t.view()).unwrap();
            let h = 1e-5;
            for idx in [(0, 0), (1, 3), (0, 4)] {
                let (mut up, mut dn) = (l.clone(), l.clone());
                up[idx] += h;
                dn[idx] -= h;
                let fd = (bernoulli_nll(up.view(), t.view()).unwrap().0 - bernoulli_nll(dn.view(), t.view()).unwrap().0)
                    / (2.0 * h);
                assert!((g[idx] - fd).abs() <= 1e-6 * g[idx].abs().max(1e-2));
            }
        }
    }

    #[test]
    fn kl_closed_forms() {
        let (kl, g) = kl_uniform_categorical(&[0.3; 5]);
        assert!(kl.abs() < 1e-15);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let (kl, _) = kl_uniform_categorical(&[800.0, 0.0, 0.0, 0.0]);
        assert!((kl - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = stream(8, &[]);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..6).map(|_| 2.0 * rng::normal(&mut rng)).collect();
            let (_, g) = kl_uniform_categorical(&theta);
            let h = 1e-5;
            for k in 0..6 {
                let (mut up, mut dn) = (theta.clone(), theta.clone());
                up[k] += h;
                dn[k] -= h;
                let fd = (kl_uniform_categorical(&up).0 - kl_uniform_categorical(&dn).0) / (2.0 * h);
                assert!((g[k] - fd).abs() <= 1e-6 * g[k].abs().max(1e-2), "{} vs {fd}", g[k]);
            }
        }
    }
}
