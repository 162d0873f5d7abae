//! Crate-wide error type.

use crate::exec::Termination;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An integration step or callable produced NaN/Inf.
    #[error("non-finite state in domain `{domain}` at t = {t}")]
    NonFiniteState { domain: String, t: f64 },

    /// A located event crossing violates the transversality assumption: the
    /// event derivative along the flow is not strictly negative, or an
    /// on-surface initial state moves outward.
    #[error("tangential event crossing of `{event_id}` in domain `{domain}` (d(event)/dt = {derivative:.3e}, threshold {threshold:.3e})")]
    Tangency {
        domain: String,
        event_id: String,
        derivative: f64,
        threshold: f64,
    },

    /// The flow reached the time horizon with no guard crossing.
    #[error("no guard crossing in domain `{domain}` within t_max = {t_max}")]
    NoImpact { domain: String, t_max: f64 },

    /// Bisection could not meet both event tolerances within the iteration cap.
    #[error("event refinement for `{event_id}` stalled: |event| = {residual:.3e} > tol {tol:.3e}")]
    EventRefinement {
        event_id: String,
        residual: f64,
        tol: f64,
    },

    /// The return map did not cross the section before `max_time` elapsed.
    #[error("no section return within max_time = {max_time} (termination: {termination:?})")]
    NoReturn {
        max_time: f64,
        termination: Termination,
    },

    /// A hybrid execution underneath a map evaluation ended abnormally.
    #[error("execution terminated with {termination:?} while {context}")]
    Terminated {
        termination: Termination,
        context: String,
    },

    /// Fixed-point iteration did not reach the residual tolerance.
    #[error("fixed point not converged after {iterations} iterations (best residual {residual:.3e}, tol {tol:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// Newton step with (DP - I) numerically singular; signals a multiplier
    /// near 1.
    #[error("singular Newton step: (DP - I) is not invertible at the current iterate")]
    SingularNewtonStep,

    /// The QR eigenvalue iteration hit its cap.
    #[error("QR eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    NoConvergenceQr { dim: usize },

    /// SVD iteration failure (pathological input).
    #[error("SVD did not converge for a {rows}x{cols} matrix")]
    NoConvergenceSvd { rows: usize, cols: usize },

    /// Ranks of matrix powers were still strictly decreasing at n_max.
    #[error("rank sweep did not stabilize within n_max = {n_max} (ranks: {ranks:?})")]
    NoStabilization { n_max: usize, ranks: Vec<usize> },

    /// Numerical ranks of matrix powers increased, which indicates a mis-set
    /// relative tolerance.
    #[error("rank of power {power} increased from {previous} to {current}; rtol = {rtol:.3e} is unusable for this matrix")]
    RankNotMonotone {
        power: usize,
        previous: usize,
        current: usize,
        rtol: f64,
    },

    /// A finite-difference probe of a map failed; carries which perturbation.
    #[error("map evaluation failed at perturbation {sign}{delta:.3e}*e_{index}: {source}")]
    Jacobian {
        index: usize,
        sign: char,
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    /// Unknown domain/guard id or a dimension mismatch at a module boundary.
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
