use num_complex::Complex64;
use thiserror::Error;

/// Crate-wide error type.
///
/// Scientific failures (a cross-check that disagrees, a scan that finds a
/// counterexample, an optimizer that stagnates) are ordinary variants here so
/// that callers can distinguish them from usage errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "quadrature did not converge within depth {max_depth}: estimate {estimate:e}, \
         error bound {bound:e}, requested {requested:e}"
    )]
    QuadratureDidNotConverge {
        estimate: f64,
        bound: f64,
        requested: f64,
        max_depth: u32,
    },

    #[error("state blew up at step {step} (t = {t}): norm {norm:e}")]
    BlowUp { step: usize, t: f64, norm: f64 },

    #[error(
        "quadratic coefficient paths disagree beyond {tol:e}: \
         kernel functional {kernel}, time-stepped {stepped}"
    )]
    PathDisagreement {
        kernel: Complex64,
        stepped: Complex64,
        tol: f64,
    },

    #[error("hypotheses not satisfied, refusing: {0}")]
    HypothesesNotSatisfied(String),

    #[error("family size {m} too small: need at least {needed} bumps per channel")]
    DesignInfeasible { m: usize, needed: usize },

    #[error(
        "design did not converge: residual sup-norm {residual:e} after {iterations} iterations\n{breakdown}"
    )]
    DesignStagnated {
        residual: f64,
        iterations: usize,
        breakdown: String,
    },

    #[error(
        "sign constraint unreachable from this seed (gamma1 = {gamma1:e}, gamma2 = {gamma2:e}); try another seed"
    )]
    SignConstraintUnreachable { gamma1: f64, gamma2: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
