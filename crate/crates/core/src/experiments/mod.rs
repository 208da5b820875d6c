//! Verification suites: duality checks, stationary-measure correlations,
//! collision and decay studies, regeneration statistics, mixing and
//! exchangeability.

mod duality;
mod measures;
mod walks;

pub use duality::{
    duality_check_stirring, duality_check_vmdyn, duality_check_voter, DualQuery, DualityReport, InitialSites,
};
pub use measures::{
    estimate_mu_correlation, exchangeability_check, mixing_check, CorrelationQuery, ExchangeabilityReport,
    MixingReport, MixingRow, MixingSide, MuEstimate, MuModel, MuSetup,
};
pub use walks::{
    collision_experiment, meeting_decay_check, regeneration_suite, CollisionReport, DecayReport, DecayRow,
    RegenerationReport,
};

/// Largest admissible gap between exact sides of an identity.
pub const EXACT_TOL: f64 = 1e-8;

/// Monte Carlo agreement tolerance in pooled standard errors.
pub const MC_SIGMAS: f64 = 3.0;

/// Seed label of dual-side randomness, independent of the forward side.
pub(crate) const DUAL_LABEL: u64 = 0xd0a1;
