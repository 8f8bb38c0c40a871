//! Gradient estimators for a single categorical slot.
//!
//! Every estimator consumes one cotangent `g = ∂f(D)/∂D` taken at the sampled
//! one-hot `D` and returns `gᵀ J` for its surrogate Jacobian `J`. The
//! reference approximations in [`reference`] and the enumeration harness in
//! [`expectation`] are the oracles the estimators are checked against.

mod config;
pub mod expectation;
mod loss;
pub mod reference;
mod straight_through;

pub use config::{CvConditioning, CvLeadingCoeff, EstimatorConfig, EstimatorKind, RaoSecondTerm, Rk2Form};
pub use expectation::{enumerate_deterministic, enumerate_expectation, enumerate_with, Expectation, ENUMERATION_LIMIT};
pub use loss::{FnLoss, LinearLoss, LossOracle, QuadraticLoss};
pub use reference::{
    exact_gradient, exact_gradient_baseline, ref_first_order, ref_rk2, ref_second_order, rk2_expectation_gap,
    EXACT_LIMIT,
};
pub use straight_through::{
    est_gumbel_rao, est_reinmax, est_reinmax_altform, est_reinmax_argmax, est_reinmax_cv, est_reinmax_rao,
    est_reinmax_rk2, est_reinmax_rk2_centered, est_st, est_stgs, estimate, make_theta_d, SlotSample,
};

use crate::simplex::Logits;

/// One estimator evaluation `∂/∂θ` for a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate(Vec<f64>);

impl GradEstimate {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `a·self + b·other`
    pub(crate) fn combine(&self, a: f64, other: &GradEstimate, b: f64) -> GradEstimate {
        GradEstimate(self.0.iter().zip(&other.0).map(|(x, y)| a * x + b * y).collect())
    }

    /// NaN if any coordinate is NaN.
    pub fn max_abs_diff(&self, other: &GradEstimate) -> f64 {
        self.0.iter().zip(&other.0).map(|(x, y)| (x - y).abs()).fold(0.0, |m, d| if d.is_nan() || d > m { d } else { m })
    }
}

/// `θ_D = log((π_τ + D)/2)`, so that `softmax(θ_D) = (π_τ + D)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedLogits(Logits);

impl ShiftedLogits {
    pub fn logits(&self) -> &Logits {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}
