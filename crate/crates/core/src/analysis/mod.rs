//! Identity verification, bias/variance measurement and sweeps.

mod identities;
mod stats;
mod sweep;

pub use identities::{gradcheck, verify_identities, Check, GradcheckReport, VerifyOptions, VerifyReport, GRADCHECK_FLOOR, GRADCHECK_STEP};
pub use stats::{
    exact_reference, bias_variance_estimators, measure, measure_bias, measure_variance, spread_estimators, MeasureOptions,
    StatsReport, EXACT_OUTER_SAMPLES,
};
pub use sweep::{beta_sweep, checkpoint_sweep, default_beta_grid, parallel_map, BetaCell, SweepRow};
