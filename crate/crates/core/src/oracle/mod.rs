//! Brute-force ground truth from truncated chains and simulation.

use thiserror::Error;

use crate::model::Stability;

pub mod fit;
pub mod gf;
pub mod simulate;
pub mod truncated;

pub use fit::{default_window, fit_decay, homogeneity_check, BetaClass, TailFit};
pub use gf::{eval_boundary_gf, in_domain, stationary_identity_residual, IdentityCheck};
pub use simulate::{simulate, Simulation};
pub use truncated::{solve_truncated, solve_truncated_sweeps, TruncatedStationary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("truncation level {0} is below {min}", min = truncated::MIN_TRUNCATION)]
    TruncationTooSmall(usize),
    #[error("model is not positive recurrent ({0:?})")]
    Unstable(Stability),
    #[error("iterative solve did not converge")]
    NotConverged,
    #[error("fit window [{lo}, {hi}] has fewer than {min} points", min = fit::MIN_FIT_POINTS)]
    WindowTooSmall { lo: usize, hi: usize },
    #[error("fit window reaching k = {hi} comes within 3 levels of the truncation N = {n}")]
    WindowBeyondTruncation { hi: usize, n: usize },
    #[error("zero probability in the fit window")]
    ZeroProbability,
    #[error("series diverges at the argument (term ratio {ratio})")]
    DivergentAtArgument { ratio: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}
