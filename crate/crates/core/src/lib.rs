//! Survival regimes of nearest-neighbour branching random walks in i.i.d.
//! random environment on the integer line.
//!
//! A particle at `x` is replaced by `v = (v_minus, v_zero, v_plus)` offspring
//! at `x - 1`, `x`, `x + 1`, with `v` drawn from an offspring law attached to
//! the site. The laws at different sites are i.i.d. draws from a finite
//! mixture ([`EnvironmentLaw`]).
//!
//! The crate decides between strong local survival, global survival with
//! local extinction, and global extinction:
//!
//! * [`criteria`]: closed-form feasible set of the lambda-criterion and the
//!   decision procedure.
//! * [`lyapunov`]: the 2x2 transfer matrices and Lyapunov exponents of their
//!   random products.
//! * [`spectral`]: Perron roots of truncated first-moment matrices.
//! * [`simulator`]: quenched Monte Carlo used to cross-check every verdict.

pub mod criteria;
pub mod envmodel;
pub mod error;
pub mod lyapunov;
pub mod seed;
pub mod simulator;
pub mod spectral;

pub use criteria::{
    classify, classify_estimating, expected_log_drift, lambda_feasible_set,
    state_feasible_interval, Direction, GammaEstimates, LambdaInterval, Regime, RegimeReport,
    Thresholds,
};
pub use envmodel::{
    moments, realize_window, state_at, validate_conditions, ConditionReport, EnvironmentLaw,
    EnvironmentWindow, MomentTriple, OffspringLaw, OffspringVector,
};
pub use error::{Error, Result};
pub use lyapunov::{
    build_a, build_a_lambda, build_a_tilde, conjugacy_residual, second_exponent_via_det,
    top_lyapunov, LyapunovEstimate, LyapunovOptions, Matrix2, MatrixKind,
};
pub use simulator::{
    frozen_mean_profile, frozen_progeny_trial, run_trial, step, supermartingale_trace,
    survival_probabilities, Configuration, FrozenProfile, McOptions, TrialOutcome, TrialStatus,
};
pub use spectral::{rho_sweep, spectral_radius, truncated_matrix, SpectralEstimate};
