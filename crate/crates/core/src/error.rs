//! Error type shared by every module in the crate.

use std::fmt;

/// Everything that can go wrong in the library. Variants carry the data a
/// caller needs to act on the failure, not just a message.
#[derive(Debug, Clone)]
pub enum Error {
    /// A constructor or operation precondition was violated.
    InvalidParameter(String),
    /// An adaptive quadrature could not reach the requested tolerance.
    QuadratureFailure { requested: f64, achieved: f64 },
    /// Newton failed to converge on a single implicit step.
    StepFailure { residual: f64, iterations: usize },
    /// Time stepping aborted mid-run; `t_reached` is the last accepted time
    /// and `partial` holds everything computed up to it.
    EvolutionFailure {
        t_reached: f64,
        detail: String,
        partial: Box<crate::evolution::Trajectory>,
    },
    /// The long-time stationary iteration collapsed to (numerically) zero.
    DegenerateStationary { sup_norm: f64 },
    /// A least-squares fit had too few usable points.
    FitFailure(String),
    /// The self-similar profile solver did not converge.
    SolverFailure { residual: f64, iterations: usize },
    /// A comparison/test function was not admissible (non-finite values).
    InvalidTestFunction(String),
    /// Two fields or tables that must share a grid do not.
    ShapeMismatch { expected: usize, got: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::QuadratureFailure { requested, achieved } => write!(
                f,
                "quadrature failure: requested rel {requested:.3e}, achieved {achieved:.3e}"
            ),
            Error::StepFailure { residual, iterations } => write!(
                f,
                "step failure: residual {residual:.3e} after {iterations} Newton iterations"
            ),
            Error::EvolutionFailure {
                t_reached, detail, ..
            } => {
                write!(f, "evolution failure at t = {t_reached:.6e}: {detail}")
            }
            Error::DegenerateStationary { sup_norm } => write!(
                f,
                "stationary iteration degenerated to sup norm {sup_norm:.3e}"
            ),
            Error::FitFailure(msg) => write!(f, "fit failure: {msg}"),
            Error::SolverFailure { residual, iterations } => write!(
                f,
                "profile solver failure: residual {residual:.3e} after {iterations} iterations"
            ),
            Error::InvalidTestFunction(msg) => write!(f, "invalid test function: {msg}"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
