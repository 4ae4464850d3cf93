use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    /// Q lies outside the physical set: every eigenvalue must lie in
    /// [-1/3 + delta, 2/3 - delta].
    #[error(
        "Q is not physical with margin {delta}: eigenvalues {eigenvalues:?} must lie in [-1/3 + delta, 2/3 - delta]"
    )]
    NonPhysical { eigenvalues: [f64; 3], delta: f64 },

    #[error("exponent budget exceeded: eigenvalue spread {spread} of B exceeds {budget}")]
    ExponentBudget { spread: f64, budget: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("nematic branch not present for alpha = {alpha} (critical alpha* = {alpha_star})")]
    BranchNotPresent { alpha: f64, alpha_star: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("physicality lost at grid point ({ix}, {iy}): eigenvalues {eigenvalues:?}, margin {delta}")]
    PhysicalityLost {
        ix: usize,
        iy: usize,
        eigenvalues: [f64; 3],
        delta: f64,
    },

    #[error("step rejected after {halvings} halvings of dt at t = {t}")]
    StepRejected { halvings: usize, t: f64 },

    #[error("director undefined: top eigenvalue gap {gap:e} is below 1e-8")]
    DegenerateDirector { gap: f64 },

    #[error("{0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
