use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simplex::Temperature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Exact,
    St,
    Stgs,
    GumbelRao,
    ReinMax,
    ReinMaxArgmax,
    ReinMaxRao,
    ReinMaxCv,
    ReinMaxRk2,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Exact,
        EstimatorKind::St,
        EstimatorKind::Stgs,
        EstimatorKind::GumbelRao,
        EstimatorKind::ReinMax,
        EstimatorKind::ReinMaxArgmax,
        EstimatorKind::ReinMaxRao,
        EstimatorKind::ReinMaxCv,
        EstimatorKind::ReinMaxRk2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Exact => "exact",
            EstimatorKind::St => "st",
            EstimatorKind::Stgs => "stgs",
            EstimatorKind::GumbelRao => "gumbel-rao",
            EstimatorKind::ReinMax => "reinmax",
            EstimatorKind::ReinMaxArgmax => "reinmax-argmax",
            EstimatorKind::ReinMaxRao => "reinmax-rao",
            EstimatorKind::ReinMaxCv => "reinmax-cv",
            EstimatorKind::ReinMaxRk2 => "reinmax-rk2",
        }
    }

    /// Samples `D` through Gumbel-argmax and needs the perturbation `G`.
    pub fn needs_gumbel(self) -> bool {
        matches!(self, EstimatorKind::Stgs)
    }

    /// Draws extra randomness beyond the sampled `D`.
    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            EstimatorKind::Stgs | EstimatorKind::GumbelRao | EstimatorKind::ReinMaxRao | EstimatorKind::ReinMaxCv
        )
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

/// Which outcome conditions the Gumbel-Rao term inside ReinMax-CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvConditioning {
    /// `D* = argmax(θ_D + G̃)` for the fresh perturbation `G̃`.
    CoupledFresh,
    /// `D* = D`, the sampled outcome.
    ReuseOriginal,
}

/// Leading coefficient on `ST(D, θ_D)` inside ReinMax-CV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvLeadingCoeff {
    /// `c = 1`
    AsPrinted,
    /// `c = 2`, the coefficient ReinMax itself carries
    FactorTwo,
}

impl CvLeadingCoeff {
    pub fn value(self) -> f64 {
        match self {
            CvLeadingCoeff::AsPrinted => 1.0,
            CvLeadingCoeff::FactorTwo => 2.0,
        }
    }
}

/// Evaluation point of the subtracted ST term in ReinMax-Rao.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaoSecondTerm {
    /// `ST_τ(D, θ_D)`
    ThetaDAsPrinted,
    /// `ST_{τ=1}(D, θ)`
    Theta,
}

/// Which ReinMax-RK2(β) estimator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rk2Form {
    /// `2gᵀ(diag(m) − (βπ + (1 − β)D)mᵀ) − β·ST_{τ=1}(D, θ)`
    AsPrinted,
    /// The printed form minus `(2β − 1)·gᵀ(D − π)·π`, whose expectation is
    /// the RK2(β) reference for every β.
    Centered,
}

macro_rules! keyword_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
                    $($name => Ok($variant),)+
                    _ => Err(Error::Config(format!("unknown {} `{s}`", stringify!($ty)))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }
    };
}

keyword_enum!(CvConditioning {
    "coupled_fresh" => CvConditioning::CoupledFresh,
    "reuse_original" => CvConditioning::ReuseOriginal,
});
keyword_enum!(CvLeadingCoeff {
    "as_printed" => CvLeadingCoeff::AsPrinted,
    "factor_two" => CvLeadingCoeff::FactorTwo,
});
keyword_enum!(RaoSecondTerm {
    "theta_d_as_printed" => RaoSecondTerm::ThetaDAsPrinted,
    "theta" => RaoSecondTerm::Theta,
});
keyword_enum!(Rk2Form {
    "as_printed" => Rk2Form::AsPrinted,
    "centered" => Rk2Form::Centered,
});

/// Estimator choice plus its knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub tau: Temperature,
    pub eta: f64,
    pub beta: f64,
    pub k_samples: usize,
    pub cv_conditioning: CvConditioning,
    pub cv_leading_coeff: CvLeadingCoeff,
    pub rao_second_term: RaoSecondTerm,
    pub rk2_form: Rk2Form,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            tau: Temperature::ONE,
            eta: 1.0,
            beta: 0.5,
            k_samples: 100,
            cv_conditioning: CvConditioning::CoupledFresh,
            cv_leading_coeff: CvLeadingCoeff::AsPrinted,
            rao_second_term: RaoSecondTerm::ThetaDAsPrinted,
            rk2_form: Rk2Form::AsPrinted,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = Temperature::new(tau)?;
        Ok(self)
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k_samples = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_samples < 1 {
            return Err(Error::Config("k_samples must be at least 1".into()));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite, got {}", self.beta)));
        }
        Ok(())
    }
}
