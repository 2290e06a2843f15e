//! Scenario files: a JSON description of a problem instance.
//!
//! Matrices are row-major integer arrays, rationals are `[num, den]` pairs
//! and Fourier maps use the flat record layout of [`FourierMap`]. Random
//! data are drawn from ChaCha20 seeded with the given 64-bit seed.

use serde::{Deserialize, Serialize};

use crate::cohomology::{difference, EquationKind, DEFAULT_GATE};
use crate::error::{Error, Result};
use crate::fourier::{FourierMap, Profile, RandomSpec};
use crate::kam::{generate_commuting_perturbation, KamOptions, KamSchedule, SkewSystem};
use crate::lattice::{LatticeMatrix, DEFAULT_WINDOW};
use crate::rational::Rational;
use crate::reduction::{extension, extension_pair, random_cocycles, ExtensionPair, PipelineParams, FIBER_GATE};
use crate::skew::SkewMap;

/// Default first cutoff of the iteration.
pub const DEFAULT_N0: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub d: usize,
    pub s: usize,
}

/// Oscillating parts of the translation cocycles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TauSpec {
    /// Maps on `T^d` with `s` components; their averages are ignored.
    Explicit { tau1: FourierMap, tau2: FourierMap },
    /// `phi0 - phi0 o A_i` for a random potential `phi0`.
    Generated(RandomSpec),
}

/// Perturbation of the model pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationSpec {
    /// Added to the generators as given.
    Explicit { f: FourierMap, g: FourierMap },
    /// Conjugation by a random near-identity map.
    Generated(RandomSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default = "default_window")]
    pub window: i64,
    #[serde(default = "default_trials")]
    pub intersection_trials: usize,
    #[serde(default = "default_graph_amplitude")]
    pub graph_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> i64 {
    DEFAULT_WINDOW
}

fn default_trials() -> usize {
    4
}

fn default_graph_amplitude() -> f64 {
    0.05
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            window: default_window(),
            intersection_trials: default_trials(),
            graph_amplitude: default_graph_amplitude(),
            seed: 0,
        }
    }
}

/// Right-hand sides of the cohomological equations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SolveData {
    Explicit { r: FourierMap, s: FourierMap },
    /// Differences of a random potential, which the solver should recover.
    Manufactured(RandomSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub kind: EquationKind,
    pub data: SolveData,
}

/// A complete scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub dims: Dims,
    pub a1: LatticeMatrix,
    pub a2: LatticeMatrix,
    #[serde(default)]
    pub theta1: Option<Vec<Rational>>,
    #[serde(default)]
    pub theta2: Option<Vec<Rational>>,
    #[serde(default)]
    pub tau: Option<TauSpec>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub kam: Option<KamSchedule>,
    #[serde(default)]
    pub options: KamOptions,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default)]
    pub solve: Option<SolveSpec>,
    /// Relative compatibility gate of the solvers.
    #[serde(default = "default_gate")]
    pub gate: f64,
    /// Gate of the periodicity and conjugacy checks on the fiber grid.
    #[serde(default = "default_fiber_gate")]
    pub fiber_gate: f64,
}

fn default_gate() -> f64 {
    DEFAULT_GATE
}

fn default_fiber_gate() -> f64 {
    FIBER_GATE
}

fn check_shape(what: &str, f: &FourierMap, base: usize, fiber: usize, target: usize) -> Result<()> {
    if f.base_dim() != base || f.fiber_dim() != fiber || f.target_dim() != target {
        return Err(Error::Dimension(format!(
            "{what}: expected shape ({base}, {fiber}, {target}), got ({}, {}, {})",
            f.base_dim(),
            f.fiber_dim(),
            f.target_dim()
        )));
    }
    Ok(())
}

impl Scenario {
    /// Parses and validates a scenario. Errors name the offending field
    /// together with the line and column.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Invalid(format!("field `{path}`: {}", e.into_inner()))
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        let Dims { d, s } = self.dims;
        if d == 0 {
            return Err(Error::Invalid("dims.d must be positive".into()));
        }
        for (name, m) in [("a1", &self.a1), ("a2", &self.a2)] {
            if m.dim() != d {
                return Err(Error::Dimension(format!("{name} is {0}x{0}, dims.d is {d}", m.dim())));
            }
        }
        for (name, t) in [("theta1", &self.theta1), ("theta2", &self.theta2)] {
            if let Some(t) = t {
                if t.len() != s {
                    return Err(Error::Dimension(format!("{name} has {} entries, dims.s is {s}", t.len())));
                }
            }
        }
        match &self.tau {
            Some(TauSpec::Explicit { tau1, tau2 }) => {
                check_shape("tau.explicit.tau1", tau1, d, 0, s)?;
                check_shape("tau.explicit.tau2", tau2, d, 0, s)?;
            }
            Some(TauSpec::Generated(r)) => r.validate()?,
            None => {}
        }
        match &self.perturbation {
            Some(PerturbationSpec::Explicit { f, g }) => {
                check_shape("perturbation.explicit.f", f, d, s, d + s)?;
                check_shape("perturbation.explicit.g", g, d, s, d + s)?;
            }
            Some(PerturbationSpec::Generated(r)) => r.validate()?,
            None => {}
        }
        if let Some(k) = &self.kam {
            k.validate()?;
        }
        self.options.orbit.validate()?;
        if let Some(sv) = &self.solve {
            match &sv.data {
                SolveData::Explicit { r, s: s_map } => {
                    let fiber = r.fiber_dim();
                    check_shape("solve.data.explicit.r", r, d, fiber, r.target_dim())?;
                    check_shape("solve.data.explicit.s", s_map, d, fiber, r.target_dim())?;
                    if sv.kind == EquationKind::Twisted && r.target_dim() != d {
                        return Err(Error::Dimension("twisted data need one component per base variable".into()));
                    }
                }
                SolveData::Manufactured(rs) => rs.validate()?,
            }
        }
        if self.check.window < 1 {
            return Err(Error::Invalid("check.window must be at least 1".into()));
        }
        if !(self.gate > 0.0) || !(self.fiber_gate > 0.0) {
            return Err(Error::Invalid("gates must be positive".into()));
        }
        Ok(())
    }

    /// Fiber translations, zero when absent.
    pub fn thetas(&self) -> (Vec<Rational>, Vec<Rational>) {
        let zero = vec![Rational::ZERO; self.dims.s];
        (
            self.theta1.clone().unwrap_or_else(|| zero.clone()),
            self.theta2.clone().unwrap_or(zero),
        )
    }

    pub fn schedule(&self) -> KamSchedule {
        self.kam.unwrap_or_else(|| KamSchedule::for_dim(self.dims.d, DEFAULT_N0))
    }

    /// Options with the smoothing profile replaced when `profile` is given.
    pub fn options_with(&self, profile: Option<Profile>) -> KamOptions {
        let mut o = self.options;
        if let Some(p) = profile {
            o.profile = p;
        }
        o
    }

    /// The commuting pair handed to the iteration.
    pub fn kam_system(&self) -> Result<SkewSystem> {
        let s = self.dims.s;
        let p = &self.options.composition;
        match &self.perturbation {
            Some(PerturbationSpec::Generated(r)) => {
                generate_commuting_perturbation(&self.a1, &self.a2, s, r.seed, r.amplitude, r.bandwidth, p)
            }
            Some(PerturbationSpec::Explicit { f, g }) => {
                let zero = vec![Rational::ZERO; s];
                SkewSystem::new(
                    SkewMap::new(self.a1.clone(), zero.clone(), f.clone())?,
                    SkewMap::new(self.a2.clone(), zero, g.clone())?,
                    p,
                )
            }
            None => {
                let zero = vec![Rational::ZERO; s];
                SkewSystem::new(
                    SkewMap::model(self.a1.clone(), zero.clone()),
                    SkewMap::model(self.a2.clone(), zero),
                    p,
                )
            }
        }
    }

    /// The perturbed action by skew extensions used by the pipeline.
    pub fn extension_pair(&self) -> Result<ExtensionPair> {
        let Dims { d, s } = self.dims;
        let p = &self.options.composition;
        let (theta1, theta2) = self.thetas();
        let (tau1, tau2) = match &self.tau {
            Some(TauSpec::Explicit { tau1, tau2 }) => (tau1.clone(), tau2.clone()),
            Some(TauSpec::Generated(r)) => random_cocycles(&self.a1, &self.a2, s, r)?,
            None => (FourierMap::zero(d, 0, s), FourierMap::zero(d, 0, s)),
        };
        match &self.perturbation {
            Some(PerturbationSpec::Explicit { f, g }) => {
                let mut pair = extension_pair(&self.a1, &self.a2, &theta1, &theta2, &tau1, &tau2, &FourierMap::zero(d, s, d + s), p)?;
                let e1 = extension(&self.a1, &theta1, &tau1)?;
                let e2 = extension(&self.a2, &theta2, &tau2)?;
                pair.alpha1 = SkewMap::new(self.a1.clone(), theta1, e1.pert.add(f))?;
                pair.alpha2 = SkewMap::new(self.a2.clone(), theta2, e2.pert.add(g))?;
                Ok(pair)
            }
            Some(PerturbationSpec::Generated(r)) => {
                let w = r.sample(d, s, d + s, false);
                extension_pair(&self.a1, &self.a2, &theta1, &theta2, &tau1, &tau2, &w, p)
            }
            None => extension_pair(&self.a1, &self.a2, &theta1, &theta2, &tau1, &tau2, &FourierMap::zero(d, s, d + s), p),
        }
    }

    pub fn pipeline_params(&self, profile: Option<Profile>) -> PipelineParams {
        PipelineParams {
            schedule: self.schedule(),
            options: self.options_with(profile),
            gate: self.gate,
            fiber_gate: self.fiber_gate,
        }
    }

    /// Right-hand sides `(r, s)` of the cohomological equations and, for
    /// manufactured data, the potential that produced them.
    pub fn cohomology_data(&self) -> Result<(EquationKind, FourierMap, FourierMap, Option<FourierMap>)> {
        let sv = self
            .solve
            .as_ref()
            .ok_or_else(|| Error::Invalid("scenario has no `solve` section".into()))?;
        match &sv.data {
            SolveData::Explicit { r, s } => Ok((sv.kind, r.clone(), s.clone(), None)),
            SolveData::Manufactured(rs) => {
                let Dims { d, s } = self.dims;
                let k = match sv.kind {
                    EquationKind::Twisted => d,
                    EquationKind::Untwisted => s.max(1),
                };
                let mut omega = rs.sample(d, s, k, false);
                if sv.kind == EquationKind::Untwisted {
                    omega = omega.without_base_average();
                }
                let r = difference(sv.kind, &omega, &self.a1);
                let s_map = difference(sv.kind, &omega, &self.a2);
                Ok((sv.kind, r, s_map, Some(omega)))
            }
        }
    }
}
