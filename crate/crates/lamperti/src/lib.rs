//! Near-critical ("Lamperti") Markov chains on the non-negative integers.
//!
//! A chain in this regime has mean drift `mu_1(x) ~ c/x` and second moment
//! `mu_2(x) ~ s^2` as `x -> infinity`, with jumps bounded by a constant `B`.
//! When `2c > s^2` the chain is transient and the return probability
//! `h(x) = P_x(hit 0)` is regularly varying with index `-gamma_c`,
//! `gamma_c = (2c - s^2)/s^2`. The crate provides:
//!
//! - kernel families and their theoretical classification ([`kernel`]);
//! - exact solvers on truncated windows for `h`, the Doob transform of the
//!   chain conditioned to return, interval entrance laws, and first-moment
//!   return/last-exit/occupation quantities ([`solver`]);
//! - the Lyapunov family `f_{gamma,nu}(x) = x^-gamma log^nu x` and its
//!   one-step drift analysis ([`lyapunov`]);
//! - reproducible parallel Monte Carlo estimators of conditional return-time
//!   moments, entrance-law coupling, and the renewal function ([`montecarlo`]);
//! - comparison settings: multidimensional lattice walks and critical
//!   branching processes with migration ([`extensions`]).
//!
//! All Monte Carlo entry points are deterministic functions of their master
//! seed: results do not depend on the number of worker threads.

pub mod banded;
pub mod extensions;
pub mod kernel;
pub mod lyapunov;
pub mod montecarlo;
pub mod solver;

mod fit;

pub use fit::{geometric_edges, linear_fit, FitLine};
pub use kernel::{
    build_lamperti_kernel, classify_theoretical, critical_exponents, verify_uniform_irreducibility,
    Classification, CriticalExponents, Family, IrreducibilityCert, JumpKernel, LampertiSpec,
    MomentProfile, MomentTag, Verdict,
};
pub use lyapunov::{drift, envelope_check, find_drift_threshold, lyapunov_value, LyapunovFn};
pub use solver::{
    build_conditioned_kernel, conditioning_identity_check, exact_first_moments, ratio_diagnostics,
    solve_interval_hitting, solve_return_prob, solve_return_prob_bracket,
    solve_return_prob_left_continuous, BoundaryPolicy, ConditionedKernel, EntranceDistribution,
    ExactMoments, HittingSolution, IdentityCheck, RatioDiagnostics,
};

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel defect: {0}")]
    KernelDefect(String),
    #[error("radius too small: {0}")]
    RadiusTooSmall(String),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("kernel is not left-continuous: {0}")]
    NotLeftContinuous(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("unreliable window: {0}")]
    UnreliableWindow(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// State of a chain on the non-negative integers.
pub type State = u64;
