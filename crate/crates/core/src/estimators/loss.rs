use crate::rng::{self, Rng};

/// A differentiable loss `f: Rⁿ → R` that can be evaluated anywhere,
/// including relaxed points off the simplex vertices.
pub trait LossOracle {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
}

/// `f(x) = cᵀx`
#[derive(Debug, Clone)]
pub struct LinearLoss {
    pub c: Vec<f64>,
}

impl LossOracle for LinearLoss {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    fn grad(&self, _x: &[f64]) -> Vec<f64> {
        self.c.clone()
    }
}

/// `f(x) = xᵀAx + bᵀx`, `A` stored row-major.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl QuadraticLoss {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        let n = b.len();
        assert_eq!(a.len(), n * n, "quadratic form must be n x n");
        Self { n, a, b }
    }

    /// Entries of `A` and `b` drawn i.i.d. N(0, 1).
    pub fn random(n: usize, rng: &mut Rng) -> Self {
        let a = (0..n * n).map(|_| rng::normal(rng)).collect();
        let b = (0..n).map(|_| rng::normal(rng)).collect();
        Self::new(a, b)
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }
}

impl LossOracle for QuadraticLoss {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                total += x[i] * self.a(i, j) * x[j];
            }
            total += self.b[i] * x[i];
        }
        total
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| {
                let mut s = self.b[k];
                for j in 0..self.n {
                    s += (self.a(k, j) + self.a(j, k)) * x[j];
                }
                s
            })
            .collect()
    }
}

/// Loss built from a pair of closures.
pub struct FnLoss<F, G> {
    pub n: usize,
    pub f: F,
    pub df: G,
}

impl<F, G> LossOracle for FnLoss<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.df)(x)
    }
}
