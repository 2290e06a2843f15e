//! Newton-type iteration conjugating a commuting pair of perturbed skew
//! maps to the model pair `(T_{A,0}, T_{B,0})`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cohomology::{solve_twisted, solve_untwisted, OrbitSumParams, DEFAULT_GATE};
use crate::compose::{invert_near_identity, CompositionParams, CERTIFIED_C1};
use crate::error::{Error, Result};
use crate::fourier::{FourierMap, Profile, SmoothingParams};
use crate::lattice::LatticeMatrix;
use crate::rational::Rational;
use crate::skew::{commutation_defect, SkewMap};
use crate::splitting::{op_l1, split_twisted, split_untwisted};

/// Generators are flagged as commuting below this defect.
pub const COMMUTING_TOL: f64 = 1e-9;

/// A pair of commuting skew maps `F = T_{A,theta_A} + f`, `G = T_{B,theta_B} + g`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SkewSystem {
    pub f: SkewMap,
    pub g: SkewMap,
    pub commutation_defect: f64,
    pub commuting: bool,
    /// The displacement `h0` of a generated system, `F = (id + h0)^{-1} T (id + h0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manufactured: Option<FourierMap>,
}

impl SkewSystem {
    pub fn new(f: SkewMap, g: SkewMap, p: &CompositionParams) -> Result<Self> {
        if f.base_dim() != g.base_dim() || f.fiber_dim() != g.fiber_dim() {
            return Err(Error::Dimension("generators live on different tori".into()));
        }
        let defect = commutation_defect(&f, &g, p)?;
        Ok(SkewSystem {
            f,
            g,
            commutation_defect: defect,
            commuting: defect < COMMUTING_TOL,
            manufactured: None,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.f.base_dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.f.fiber_dim()
    }

    /// `max(|f|_r, |g|_r)`.
    pub fn eps(&self, r: u32) -> f64 {
        self.f.pert.cr_majorant(r).max(self.g.pert.cr_majorant(r))
    }

    /// `log10 max(|f|_r, |g|_r)` for large real `r`, without overflow.
    pub fn log10_eps(&self, r: f64) -> f64 {
        log10_majorant(&self.f.pert, r).max(log10_majorant(&self.g.pert, r))
    }
}

fn log10_majorant(f: &FourierMap, r: f64) -> f64 {
    let terms: Vec<f64> = f
        .iter()
        .map(|(k, v)| {
            let norm = k.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let c = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            r * (1.0 + 2.0 * std::f64::consts::PI * norm).ln() + c.ln()
        })
        .collect();
    let Some(top) = terms.iter().cloned().reduce(f64::max) else {
        return f64::NEG_INFINITY;
    };
    (top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()) / std::f64::consts::LN_10
}

/// Coefficient decay of generated displacements.
pub const GENERATOR_DECAY: f64 = 0.5;

/// Conjugates `(T_{A,0}, T_{B,0})` by a random near-identity map whose C^1
/// majorant is `0.999 * amplitude`.
pub fn generate_commuting_perturbation(
    a: &LatticeMatrix,
    b: &LatticeMatrix,
    fiber_dim: usize,
    seed: u64,
    amplitude: f64,
    bandwidth: i64,
    p: &CompositionParams,
) -> Result<SkewSystem> {
    if !(0.0..CERTIFIED_C1).contains(&amplitude) {
        return Err(Error::Invalid(format!("amplitude must lie in [0, 1/4), got {amplitude}")));
    }
    if bandwidth < 1 {
        return Err(Error::Invalid("bandwidth must be at least 1".into()));
    }
    if !a.commutes_with(b) {
        return Err(Error::NotCommuting);
    }
    let d = a.dim();
    let zero = vec![Rational::ZERO; fiber_dim];
    let ta = SkewMap::model(a.clone(), zero.clone());
    let tb = SkewMap::model(b.clone(), zero);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let raw = FourierMap::random(d, fiber_dim, d + fiber_dim, bandwidth, GENERATOR_DECAY, true, &mut rng);
    let h0 = if amplitude == 0.0 || raw.is_zero() {
        FourierMap::zero(d, fiber_dim, d + fiber_dim)
    } else {
        raw.scale(0.999 * amplitude / raw.cr_majorant(1))
    };
    let g0 = invert_near_identity(&h0, p)?.map;
    let f = ta.conjugate(&h0, &g0, p)?.value;
    let g = tb.conjugate(&h0, &g0, p)?.value;
    let mut sys = SkewSystem::new(f, g, p)?;
    sys.manufactured = Some(h0);
    Ok(sys)
}

/// Cutoffs `N_{i+1} = N_i^{3/2}` and stopping rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KamSchedule {
    pub n0: f64,
    pub max_iters: usize,
    pub floor_tol: f64,
    /// Loss-of-derivatives parameter; only enters the diagnostics.
    pub sigma: f64,
}

/// Exponent of the cutoff recursion.
pub const GROWTH_EXPONENT: f64 = 1.5;

/// About a thousand machine epsilons.
pub const DEFAULT_FLOOR_TOL: f64 = 2.2e-13;

impl KamSchedule {
    pub fn new(n0: f64, max_iters: usize, floor_tol: f64, sigma: f64) -> Result<Self> {
        let s = KamSchedule {
            n0,
            max_iters,
            floor_tol,
            sigma,
        };
        s.validate()?;
        Ok(s)
    }

    /// Defaults for a base torus of dimension `d`: `sigma = d + 2`.
    pub fn for_dim(d: usize, n0: f64) -> Self {
        KamSchedule {
            n0,
            max_iters: 8,
            floor_tol: DEFAULT_FLOOR_TOL,
            sigma: d as f64 + 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n0 > 1.0) || !self.n0.is_finite() {
            return Err(Error::Invalid(format!("N0 must exceed 1, got {}", self.n0)));
        }
        if !(self.floor_tol > 0.0) {
            return Err(Error::Invalid("floor_tol must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Invalid("sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        6.0 * (self.sigma + 1.0)
    }

    pub fn mu0(&self) -> f64 {
        20.0 * (self.sigma + 1.0)
    }

    /// `N_0, ..., N_{count-1}`.
    pub fn cutoffs(&self, count: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(count);
        let mut n = self.n0;
        for _ in 0..count {
            out.push(n);
            n = n.powf(GROWTH_EXPONENT);
        }
        out
    }
}

/// Numerical settings shared by every step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KamOptions {
    #[serde(default)]
    pub orbit: OrbitSumParams,
    #[serde(default)]
    pub composition: CompositionParams,
    #[serde(default = "default_profile")]
    pub profile: Profile,
}

fn default_profile() -> Profile {
    Profile::Sharp
}

impl Default for KamOptions {
    fn default() -> Self {
        KamOptions {
            orbit: OrbitSumParams::default(),
            composition: CompositionParams::default(),
            profile: default_profile(),
        }
    }
}

/// Measured quantities of one step.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub cutoff: f64,
    /// `|h|_0` and `|h|_1`.
    pub delta0: f64,
    pub delta1: f64,
    /// Sup-majorants of the error parts of both splits.
    pub split_error: f64,
    /// `|L_1(S_N f_1, S_N g_1)|_0`.
    pub l1_defect: f64,
    /// `|[f_2]|_0 + |[g_2]|_0` after the step.
    pub average_term: f64,
    pub eps0_after: f64,
    pub eps1_after: f64,
    pub commutation_defect: f64,
    pub budget: f64,
    pub solver_residual: f64,
    pub warnings: Vec<String>,
}

/// Result of [`kam_step`].
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub h: FourierMap,
    pub system: SkewSystem,
    pub diagnostics: StepDiagnostics,
}

/// Relative gate on the commutation defect before a step.
pub const STEP_COMMUTATION_GATE: f64 = 1e-6;

/// One Newton step at cutoff `n`.
pub fn kam_step(sys: &SkewSystem, n: f64, opts: &KamOptions) -> Result<StepOutput> {
    let (a, b) = (&sys.f.a, &sys.g.a);
    let (d, s) = (sys.base_dim(), sys.fiber_dim());
    if sys.f.theta.iter().chain(&sys.g.theta).any(|t| *t != Rational::ZERO) {
        return Err(Error::Invalid("the iteration expects untranslated model maps".into()));
    }
    let eps0 = sys.eps(0);
    if sys.commutation_defect > STEP_COMMUTATION_GATE * eps0.max(1e-6) {
        return Err(Error::NotCommuting);
    }
    let smoothing = SmoothingParams::new(n, opts.profile)?;
    let (sf, _) = sys.f.pert.smooth_truncate(&smoothing);
    let (sg, _) = sys.g.pert.smooth_truncate(&smoothing);
    let (f1, f2) = (sf.components(0, d), sf.components(d, s));
    let (g1, g2) = (sg.components(0, d), sg.components(d, s));

    let tw = split_twisted(&f1, &g1, a, b, &opts.orbit)?;
    let un = split_untwisted(&f2, &g2, a, b, &opts.orbit)?;
    let mut warnings = tw.warnings.clone();
    warnings.extend(un.warnings.iter().cloned());
    let l1_defect = op_l1(&f1, &g1, a, b).cr_majorant(0);
    let split_error = tw.diagnostics.err_f.max(tw.diagnostics.err_g).max(un.diagnostics.err_f).max(un.diagnostics.err_g);

    let h1 = solve_twisted(&tw.proj_f, &tw.proj_g, a, b, &opts.orbit, DEFAULT_GATE)?;
    let h2 = solve_untwisted(&un.proj_f, &un.proj_g, a, b, &opts.orbit, DEFAULT_GATE)?;
    warnings.extend(h1.warnings.iter().cloned());
    warnings.extend(h2.warnings.iter().cloned());
    let solver_residual = h1.residual_a.max(h1.residual_b).max(h2.residual_a).max(h2.residual_b);
    let h = FourierMap::stack(&[&h1.omega, &h2.omega]);

    let delta1 = h.cr_majorant(1);
    if delta1 >= CERTIFIED_C1 {
        return Err(Error::StepRejected(delta1));
    }
    let p = &opts.composition;
    let inv = invert_near_identity(&h, p)?;
    let nf = sys.f.conjugate(&h, &inv.map, p)?;
    let ng = sys.g.conjugate(&h, &inv.map, p)?;
    let mut budget = inv.budget + nf.budget + ng.budget;
    let (mut f_new, mut g_new) = (nf.value, ng.value);
    // Coefficients far below the initial scale cannot influence the floor.
    let tol = p.drop_threshold(eps0);
    budget += f_new.pert.prune(tol) + g_new.pert.prune(tol);
    let defect = commutation_defect(&f_new, &g_new, p)?;
    let system = SkewSystem {
        f: f_new,
        g: g_new,
        commutation_defect: defect,
        commuting: defect < COMMUTING_TOL,
        manufactured: None,
    };
    let average_term =
        system.f.pert.components(d, s).base_average().cr_majorant(0) + system.g.pert.components(d, s).base_average().cr_majorant(0);
    let diagnostics = StepDiagnostics {
        cutoff: n,
        delta0: h.cr_majorant(0),
        delta1,
        split_error,
        l1_defect,
        average_term,
        eps0_after: system.eps(0),
        eps1_after: system.eps(1),
        commutation_defect: defect,
        budget,
        solver_residual,
        warnings,
    };
    Ok(StepOutput { h, system, diagnostics })
}

/// One row of the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KamIteration {
    pub iteration: usize,
    pub cutoff: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub log10_eps_mu0: f64,
    pub delta1: f64,
    pub commutation_defect: f64,
    pub average_term: f64,
    pub split_error: f64,
    pub budget: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KamStatus {
    Converged,
    MaxIterations,
    Diverged,
}

/// Full record of a run.
#[derive(Clone, Debug, Serialize)]
pub struct KamReport {
    pub status: KamStatus,
    pub iterations: Vec<KamIteration>,
    /// Final errors `max(|f|_r, |g|_r)` at `r = 0, 1`.
    pub final_eps: [f64; 2],
    /// The displacements `h^(i)` in order.
    pub chain: Vec<FourierMap>,
    /// `H = (id + h^(1)) o ... o (id + h^(l)) - id`.
    pub composed: FourierMap,
    /// Sup-majorants of `H o T_A - F o H` and `H o T_B - G o H`.
    pub final_residuals: [f64; 2],
    pub total_budget: f64,
    pub kappa: f64,
    pub mu0: f64,
    pub warnings: Vec<String>,
    /// The conjugated system `H^{-1} (F, G) H`.
    pub final_system: SkewSystem,
}

impl KamReport {
    /// `log eps_{i+1} / log eps_i` over iterations whose error stays above `floor`.
    pub fn decay_ratios(&self, floor: f64) -> Vec<f64> {
        let mut eps: Vec<f64> = self.iterations.iter().map(|r| r.eps0).collect();
        eps.push(self.final_eps[0]);
        eps.windows(2)
            .filter(|w| w[0] > floor && w[1] > floor)
            .map(|w| w[1].ln() / w[0].ln())
            .collect()
    }
}

/// Iterates [`kam_step`] along the schedule.
pub fn run_kam(sys: &SkewSystem, schedule: &KamSchedule, opts: &KamOptions) -> Result<KamReport> {
    schedule.validate()?;
    let (d, s) = (sys.base_dim(), sys.fiber_dim());
    let p = &opts.composition;
    let cutoffs = schedule.cutoffs(schedule.max_iters);
    let mut current = sys.clone();
    current.manufactured = None;
    let mut iterations = Vec::new();
    let mut chain = Vec::new();
    let mut composed = SkewMap::near_identity(FourierMap::zero(d, s, d + s));
    let mut total_budget = 0.0;
    let mut warnings = Vec::new();
    let mut status = KamStatus::MaxIterations;
    let mut rises = 0;
    let mut last_eps = f64::INFINITY;
    for (i, &n) in cutoffs.iter().enumerate() {
        let eps0 = current.eps(0);
        if eps0 < schedule.floor_tol {
            status = KamStatus::Converged;
            break;
        }
        if eps0 > last_eps {
            rises += 1;
            if rises >= 2 {
                status = KamStatus::Diverged;
                break;
            }
        } else {
            rises = 0;
        }
        last_eps = eps0;
        let step = kam_step(&current, n, opts)?;
        iterations.push(KamIteration {
            iteration: i,
            cutoff: n,
            eps0,
            eps1: current.eps(1),
            log10_eps_mu0: current.log10_eps(schedule.mu0()),
            delta1: step.diagnostics.delta1,
            commutation_defect: current.commutation_defect,
            average_term: step.diagnostics.average_term,
            split_error: step.diagnostics.split_error,
            budget: step.diagnostics.budget,
        });
        total_budget += step.diagnostics.budget;
        warnings.extend(step.diagnostics.warnings.iter().map(|w| format!("iteration {i}: {w}")));
        let next = composed.compose(&SkewMap::near_identity(step.h.clone()), p)?;
        total_budget += next.budget;
        composed = next.value;
        chain.push(step.h);
        current = step.system;
    }
    if status == KamStatus::MaxIterations && current.eps(0) < schedule.floor_tol {
        status = KamStatus::Converged;
    }
    let residual = |model: &LatticeMatrix, map: &SkewMap| -> Result<f64> {
        let t = SkewMap::model(model.clone(), vec![Rational::ZERO; s]);
        let lhs = composed.compose(&t, p)?.value;
        let rhs = map.compose(&composed, p)?.value;
        Ok(lhs.distance(&rhs))
    };
    let final_residuals = [residual(&sys.f.a, &sys.f)?, residual(&sys.g.a, &sys.g)?];
    Ok(KamReport {
        status,
        final_eps: [current.eps(0), current.eps(1)],
        iterations,
        chain,
        composed: composed.pert,
        final_residuals,
        total_budget,
        kappa: schedule.kappa(),
        mu0: schedule.mu0(),
        warnings,
        final_system: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_recursion() {
        let s = KamSchedule::for_dim(2, 4.0);
        let c = s.cutoffs(3);
        assert_eq!(c, vec![4.0, 8.0, 8f64.powf(1.5)]);
        assert_eq!(s.kappa(), 30.0);
        assert_eq!(s.mu0(), 100.0);
    }

    #[test]
    fn zero_amplitude_gives_the_model() {
        let a = LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let b = LatticeMatrix::from_rows(&[vec![-3, -2], vec![-2, -1]]).unwrap();
        let sys = generate_commuting_perturbation(&a, &b, 1, 7, 0.0, 4, &CompositionParams::default()).unwrap();
        assert!(sys.f.is_model() && sys.g.is_model());
        let rep = run_kam(&sys, &KamSchedule::for_dim(2, 4.0), &KamOptions::default()).unwrap();
        assert_eq!(rep.status, KamStatus::Converged);
        assert!(rep.chain.is_empty() && rep.composed.is_zero());
    }
}
