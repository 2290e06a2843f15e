//! Cohomological equations, tame splitting and a KAM iteration for commuting
//! skew products on `T^d x T^s`, together with the reduction of isometric
//! extensions with rational fiber averages.

pub mod cohomology;
pub mod compose;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod kam;
pub mod lattice;
pub mod rational;
pub mod reduction;
pub mod scenario;
pub mod skew;
pub mod splitting;

pub use cohomology::{solve_twisted, solve_untwisted, CohomologySolution, EquationKind, OrbitSumParams};
pub use compose::CompositionParams;
pub use error::{Error, Result};
pub use fourier::{FourierMap, Profile, RandomSpec};
pub use kam::{run_kam, KamOptions, KamReport, KamSchedule, KamStatus, SkewSystem};
pub use lattice::{higher_rank_window, is_ergodic, HigherRankReport, LatticeMatrix};
pub use rational::Rational;
pub use reduction::{rational_average_pipeline, ExtensionPair, PipelineOutput, PipelineReport, RationalFiberData};
pub use scenario::Scenario;
pub use skew::SkewMap;

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
