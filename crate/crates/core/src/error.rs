//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall in two families: validation problems with the input
/// (see [`Error::is_validation`]) and numerical failures detected while
/// computing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i128),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("generators do not commute")]
    NotCommuting,

    #[error("no expanding directions")]
    NoExpandingDirections,

    #[error("zero frequency has no dominant subspace")]
    ZeroFrequency,

    #[error("aliasing: grid {grid} on axis {axis} cannot resolve bandwidth {bandwidth}")]
    Aliasing {
        axis: usize,
        grid: usize,
        bandwidth: i64,
    },

    #[error("not a certified diffeomorphism (C1 majorant {0:.3e} >= 1/4)")]
    NotCertified(f64),

    #[error("inverse did not converge after {iterations} iterations (last change {change:.3e})")]
    InverseNotConverged { iterations: usize, change: f64 },

    #[error("obstruction at zero mode")]
    ZeroModeObstruction,

    #[error("obstruction: nonzero average ({0:.3e})")]
    NonzeroAverage(f64),

    #[error("not a cocycle within tolerance (defect {defect:.3e}, gate {gate:.3e})")]
    NotCocycle { defect: f64, gate: f64 },

    #[error("Jordan blocks unsupported")]
    JordanBlocks,

    #[error("twist is not ergodic")]
    NotErgodic,

    #[error("step rejected: conjugacy not certified (C1 majorant {0:.3e})")]
    StepRejected(f64),

    #[error("divergence detected at iteration {iteration}: eps rose from {from:.3e} to {to:.3e}")]
    Divergence { iteration: usize, from: f64, to: f64 },

    #[error("not a commuting extension pair (defect {0:.3e})")]
    NotExtensionPair(f64),

    #[error("not q-periodic (defect {0:.3e})")]
    NotPeriodic(f64),

    #[error("q*theta is not an integer vector")]
    NotRationalPeriod,

    #[error("not a fiber factor; residual coupling {coupling:.3e} at {at:?}")]
    NotFiberFactor { coupling: f64, at: Vec<i64> },

    #[error("taylor expansion of composition did not converge (order {0})")]
    TaylorDiverged(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True when the error reflects malformed or out-of-contract input
    /// rather than a failure of the numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Invalid(_)
            | Error::NotUnimodular(_)
            | Error::Dimension(_)
            | Error::NotCommuting
            | Error::NotErgodic
            | Error::JordanBlocks
            | Error::NotRationalPeriod
            | Error::NonzeroAverage(_)
            | Error::NotCocycle { .. }
            | Error::NotExtensionPair(_)
            | Error::ZeroFrequency
            | Error::NoExpandingDirections => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn at_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
