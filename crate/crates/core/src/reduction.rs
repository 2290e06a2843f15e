//! Isometric extensions with rational fiber averages: reduction of the
//! translation cocycle to its average, the lattice data of the averages,
//! periodic fiber conjugacies, and the assembled conjugacy of a perturbed
//! action to its model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::cohomology::{solve_untwisted, OrbitSumParams, TwistSpectrum, DEFAULT_GATE};
use crate::compose::{compose_with_map, invert_near_identity, CompositionParams};
use crate::error::{Error, Result};
use crate::fourier::{grid_transform, FourierMap, RandomSpec};
use crate::kam::{run_kam, KamOptions, KamReport, KamSchedule, KamStatus, SkewSystem};
use crate::lattice::{higher_rank_window, is_ergodic, HigherRankReport, LatticeMatrix, DEFAULT_WINDOW};
use crate::rational::{lcm, vec_add, vec_fract, vec_is_integer, vec_mul_int, Rational};
use crate::skew::{Budgeted, SkewMap};

// ---------------------------------------------------------------------------
// Lattice data of the fiber averages.

/// Window classification of `i theta_1 + j theta_2` modulo `Z^s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalFiberData {
    pub theta1: Vec<Rational>,
    pub theta2: Vec<Rational>,
    /// Least `M > 0` with `M theta_1, M theta_2` integral.
    pub m0: i64,
    /// `(i, j)` with `|i|, |j| <= M0` and `i theta_1 + j theta_2` integral.
    pub sigma: Vec<(i64, i64)>,
    /// The rest of the window.
    pub lambda: Vec<(i64, i64)>,
    /// `min` over `lambda` of the sup-distance to `Z^s`; `None` when `lambda` is empty.
    pub delta_star: Option<Rational>,
}

fn combination(theta1: &[Rational], theta2: &[Rational], i: i64, j: i64) -> Vec<Rational> {
    vec_add(&vec_mul_int(theta1, i), &vec_mul_int(theta2, j))
}

/// Sup-distance of a rational vector to the integer lattice.
fn lattice_distance(v: &[Rational]) -> Rational {
    v.iter().map(|t| t.dist_to_integer()).max().unwrap_or(Rational::ZERO)
}

impl RationalFiberData {
    pub fn new(theta1: &[Rational], theta2: &[Rational]) -> Result<Self> {
        if theta1.len() != theta2.len() {
            return Err(Error::Dimension("fiber translations have different lengths".into()));
        }
        let m0 = theta1.iter().chain(theta2).fold(1, |acc, t| lcm(acc, t.den()));
        let mut sigma = Vec::new();
        let mut lambda = Vec::new();
        let mut delta: Option<Rational> = None;
        for i in -m0..=m0 {
            for j in -m0..=m0 {
                let v = combination(theta1, theta2, i, j);
                if vec_is_integer(&v) {
                    sigma.push((i, j));
                } else {
                    lambda.push((i, j));
                    let dist = lattice_distance(&v);
                    delta = Some(delta.map_or(dist, |d| d.min(dist)));
                }
            }
        }
        Ok(RationalFiberData {
            theta1: vec_fract(theta1),
            theta2: vec_fract(theta2),
            m0,
            sigma,
            lambda,
            delta_star: delta,
        })
    }
}

/// Two independent elements of `sigma` and the generators they select.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subaction {
    pub m: (i64, i64),
    pub n: (i64, i64),
    /// `|m_1 n_2 - m_2 n_1|`.
    pub q: i64,
    pub a: LatticeMatrix,
    pub b: LatticeMatrix,
    pub condition: f64,
}

fn element(a1: &LatticeMatrix, a2: &LatticeMatrix, e: (i64, i64)) -> Option<LatticeMatrix> {
    a1.checked_pow(e.0)?.checked_mul(&a2.checked_pow(e.1)?)
}

/// Picks `(m, n)` among independent pairs of `sigma` by total word length
/// `|m|_1 + |n|_1` (each unit costs one composition of perturbed maps),
/// then eigenbasis condition (compared to two decimals of `log10`), then
/// `q`, then the larger row-sum norm, then lexicographically.
pub fn choose_subaction(data: &RationalFiberData, a1: &LatticeMatrix, a2: &LatticeMatrix) -> Result<Subaction> {
    type Key = (i64, i64, i64, i64, (i64, i64), (i64, i64));
    let mut best: Option<(Key, Subaction)> = None;
    let candidates: Vec<((i64, i64), LatticeMatrix)> = data
        .sigma
        .iter()
        .filter(|&&e| e != (0, 0))
        .filter_map(|&e| element(a1, a2, e).map(|m| (e, m)))
        .filter(|(_, m)| is_ergodic(m))
        .collect();
    for (ia, (m, am)) in candidates.iter().enumerate() {
        for (n, bn) in candidates.iter().skip(ia + 1) {
            let det = m.0 * n.1 - m.1 * n.0;
            if det == 0 {
                continue;
            }
            let spec = TwistSpectrum::new(am, Some(bn));
            if !spec.semisimple {
                continue;
            }
            let cond_bucket = (spec.condition.log10() * 100.0).round() as i64;
            let norm = am.norm_inf().max(bn.norm_inf());
            let words = m.0.abs() + m.1.abs() + n.0.abs() + n.1.abs();
            let key: Key = (words, cond_bucket, det.abs(), norm, *m, *n);
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((
                    key,
                    Subaction {
                        m: *m,
                        n: *n,
                        q: det.abs(),
                        a: am.clone(),
                        b: bn.clone(),
                        condition: spec.condition,
                    },
                ));
            }
        }
    }
    best.map(|(_, s)| s)
        .ok_or_else(|| Error::Invalid("no independent pair of ergodic subaction generators in the window".into()))
}

// ---------------------------------------------------------------------------
// Reduction of the translation cocycle.

/// `tau_i(x)` as maps on `T^d` with `s` components.
fn check_tau(tau: &FourierMap, d: usize) -> Result<()> {
    if tau.base_dim() != d || tau.fiber_dim() != 0 {
        return Err(Error::Dimension("translation cocycles are functions of the base variables only".into()));
    }
    Ok(())
}

/// Output of [`reduce_to_average`].
#[derive(Clone, Debug, Serialize)]
pub struct AverageReduction {
    /// `phi` with `phi o A_i - phi = -tau_i + [tau_i]`.
    pub phi: FourierMap,
    pub averages: [Vec<f64>; 2],
    /// `|tau_1 o A_2 - tau_1 - tau_2 o A_1 + tau_2|_0`.
    pub compatibility_defect: f64,
    /// Sup-majorants of the reduced fiber displacements minus the averages.
    pub residuals: [f64; 2],
    pub higher_rank: HigherRankReport,
}

/// Finds `phi` such that `(x, y + phi(x))` conjugates `T_{A_i, tau_i}` to
/// the translation by the average of `tau_i`.
pub fn reduce_to_average(
    tau1: &FourierMap,
    tau2: &FourierMap,
    a1: &LatticeMatrix,
    a2: &LatticeMatrix,
    p: &OrbitSumParams,
    gate: f64,
) -> Result<AverageReduction> {
    let d = a1.dim();
    check_tau(tau1, d)?;
    check_tau(tau2, d)?;
    let higher_rank = higher_rank_window(a1, a2, DEFAULT_WINDOW)?;
    let lhs = tau1.pullback(a2).sub(tau1);
    let rhs = tau2.pullback(a1).sub(tau2);
    let compatibility_defect = lhs.sub(&rhs).cr_majorant(0);
    let scale = tau1.cr_majorant(0).max(tau2.cr_majorant(0)).max(f64::MIN_POSITIVE);
    if compatibility_defect > gate * scale {
        return Err(Error::NotExtensionPair(compatibility_defect));
    }
    let r = tau1.without_base_average().scale(-1.0);
    let s = tau2.without_base_average().scale(-1.0);
    let phi = solve_untwisted(&r, &s, a1, a2, p, gate)?.omega;
    let avg = |t: &FourierMap| t.coeff(&vec![0; d]).iter().map(|z| z.re).collect::<Vec<f64>>();
    let residual = |t: &FourierMap, a: &LatticeMatrix| phi.pullback(a).sub(&phi).add(&t.without_base_average()).cr_majorant(0);
    Ok(AverageReduction {
        residuals: [residual(tau1, a1), residual(tau2, a2)],
        averages: [avg(tau1), avg(tau2)],
        phi,
        compatibility_defect,
        higher_rank,
    })
}

/// `(x, y) -> (x, y + phi(x))` as a displacement on `T^d x T^s`.
pub fn fiber_shear(phi: &FourierMap) -> FourierMap {
    let (d, s) = (phi.base_dim(), phi.target_dim());
    let lifted = phi.with_fiber_dim(s);
    FourierMap::stack(&[&FourierMap::zero(d, s, d), &lifted])
}

/// The extension `T_{A, tau}(x, y) = (A x, y + tau(x))` with `tau = theta + tau~`.
pub fn extension(a: &LatticeMatrix, theta: &[Rational], tau_oscillating: &FourierMap) -> Result<SkewMap> {
    let mut t = tau_oscillating.without_base_average();
    t.symmetrize();
    SkewMap::new(a.clone(), theta.to_vec(), fiber_shear(&t))
}

// ---------------------------------------------------------------------------
// Fiber maps.

/// Number of sample points per fiber axis in grid checks.
pub const FIBER_GRID: usize = 512;

/// Default gate for periodicity and conjugacy checks on the fiber grid.
pub const FIBER_GATE: f64 = 1e-9;

/// Largest absolute value of a map on the fiber grid.
fn fiber_grid_sup(f: &FourierMap) -> Result<f64> {
    if f.is_zero() {
        return Ok(0.0);
    }
    let shape = vec![FIBER_GRID; f.fiber_dim()];
    let samples = grid_transform(f, &shape)?;
    Ok(samples
        .values
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Distance of a fiber map to the rotation `R_theta`, on the fiber grid.
fn distance_to_rotation(f: &SkewMap, theta: &[Rational]) -> Result<f64> {
    if vec_fract(&f.theta) != vec_fract(theta) {
        return Ok(f64::INFINITY);
    }
    fiber_grid_sup(&f.pert)
}

fn fiber_power(phi: &SkewMap, n: u32, p: &CompositionParams) -> Result<SkewMap> {
    if n == 0 {
        return SkewMap::fiber(vec![Rational::ZERO; phi.fiber_dim()], FourierMap::zero(0, phi.fiber_dim(), phi.fiber_dim()));
    }
    Ok(phi.power(n, p)?.value)
}

/// Result of [`periodic_fiber_conjugacy`].
#[derive(Clone, Debug, Serialize)]
pub struct PeriodicConjugacy {
    /// `V = id + v`.
    pub v: FourierMap,
    /// Grid sup of `Phi^q - id`.
    pub periodicity_defect: f64,
    /// Grid sup of `sum_{i<q} omega o Phi^i`.
    pub orbit_sum_defect: f64,
    /// Grid sup of `v - v o Phi - omega`.
    pub cohomology_residual: f64,
    /// Grid sup of `V o Phi o V^{-1} - R_theta`.
    pub conjugacy_residual: f64,
}

/// Conjugates a `q`-periodic fiber map `Phi = R_theta + omega` to `R_theta`.
pub fn periodic_fiber_conjugacy(
    phi: &SkewMap,
    theta: &[Rational],
    q: i64,
    gate: f64,
    p: &CompositionParams,
) -> Result<PeriodicConjugacy> {
    if phi.base_dim() != 0 {
        return Err(Error::Dimension("fiber maps have no base variables".into()));
    }
    if q < 1 || q > u32::MAX as i64 {
        return Err(Error::Invalid(format!("period must be positive, got {q}")));
    }
    if !vec_is_integer(&vec_mul_int(theta, q)) {
        return Err(Error::NotRationalPeriod);
    }
    if vec_fract(&phi.theta) != vec_fract(theta) {
        return Err(Error::Invalid("fiber map translates by a different vector".into()));
    }
    let s = phi.fiber_dim();
    let qn = q as u32;
    let omega = &phi.pert;
    // omega o Phi^i for i < q, and Phi^q.
    let mut terms = Vec::with_capacity(qn as usize);
    let mut power = fiber_power(phi, 0, p)?;
    for _ in 0..qn {
        let shifted = omega.pullback_skew(&power.a, &power.theta);
        terms.push(compose_with_map(&shifted, &power.pert, p)?.map);
        power = phi.compose(&power, p)?.value;
    }
    let periodicity_defect = distance_to_rotation(&power, &vec![Rational::ZERO; s])?;
    if !(periodicity_defect <= gate) {
        return Err(Error::NotPeriodic(periodicity_defect));
    }
    let total = terms.iter().fold(FourierMap::zero(0, s, s), |acc, t| acc.add(t));
    let orbit_sum_defect = fiber_grid_sup(&total)?;
    let mut v = FourierMap::zero(0, s, s);
    for (i, t) in terms.iter().enumerate().take(qn.saturating_sub(1) as usize) {
        v = v.add(&t.scale((q - i as i64 - 1) as f64 / q as f64));
    }
    v.symmetrize();
    let vmap = SkewMap::near_identity(v.clone());
    let v_phi = vmap.compose(phi, p)?.value;
    let cohomology_residual = fiber_grid_sup(&v.sub(&v_phi.pert.sub(omega)).sub(omega))?;
    let conj = conjugate_fiber(phi, &v, p)?;
    let conjugacy_residual = distance_to_rotation(&conj, theta)?;
    Ok(PeriodicConjugacy {
        v,
        periodicity_defect,
        orbit_sum_defect,
        cohomology_residual,
        conjugacy_residual,
    })
}

/// `V o Phi o V^{-1}` with `V = id + v`.
fn conjugate_fiber(phi: &SkewMap, v: &FourierMap, p: &CompositionParams) -> Result<SkewMap> {
    let vinv = invert_near_identity(v, p)?.map;
    Ok(phi.conjugate(&vinv, v, p)?.value)
}

// ---------------------------------------------------------------------------
// Intersection property.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntersectionVerdict {
    Pass,
    Fail,
    HeuristicPass,
}

/// Sample points per base axis in the intersection scan.
pub const INTERSECTION_GRID: usize = 48;

fn base_grid_points(d: usize, n: usize) -> Vec<Vec<f64>> {
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; d];
            for a in (0..d).rev() {
                x[a] = (idx % n) as f64 / n as f64;
                idx /= n;
            }
            x
        })
        .collect()
}

fn centered(v: f64) -> f64 {
    v - v.round()
}

/// Tests whether `F` maps graphs `y = y0 + psi(x)` onto sets meeting them.
///
/// The first trial uses a flat graph; the others random graphs with C^1
/// majorant `graph_amplitude`. For one fiber dimension a sign change of
/// the fiber displacement on the scan grid decides each trial; otherwise
/// the smallest displacement norm is compared with the grid resolution.
pub fn check_intersection_property(f: &SkewMap, trials: usize, graph_amplitude: f64, seed: u64) -> Result<IntersectionVerdict> {
    let (d, s) = (f.base_dim(), f.fiber_dim());
    if s == 0 {
        return Err(Error::Dimension("the fiber must be at least one-dimensional".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let points = base_grid_points(d, INTERSECTION_GRID);
    let lip = f.pert.cr_majorant(1) + graph_amplitude + f.a.norm_inf() as f64 * graph_amplitude;
    let resolution = lip / INTERSECTION_GRID as f64 + 1e-12;
    let mut heuristic = false;
    for trial in 0..trials.max(1) {
        let y0: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
        let psi = if trial == 0 || graph_amplitude == 0.0 {
            FourierMap::zero(d, 0, s)
        } else {
            let raw = FourierMap::random(d, 0, s, 2, 0.5, false, &mut rng);
            if raw.is_zero() {
                raw
            } else {
                raw.scale(graph_amplitude / raw.cr_majorant(1))
            }
        };
        let displacement = |x: &[f64]| -> Vec<f64> {
            let gy = psi.evaluate(x, &[]);
            let z: Vec<f64> = x.iter().cloned().chain(y0.iter().zip(&gy).map(|(a, b)| a + b)).collect();
            let img = f.evaluate(&z);
            let (bx, by) = img.split_at(d);
            let target = psi.evaluate(bx, &[]);
            by.iter().zip(&y0).zip(&target).map(|((v, a), b)| centered(v - a - b)).collect()
        };
        if s == 1 {
            let (mut neg, mut pos) = (false, false);
            for x in &points {
                let v = displacement(x)[0];
                neg |= v <= 0.0;
                pos |= v >= 0.0;
            }
            if !(neg && pos) {
                return Ok(IntersectionVerdict::Fail);
            }
        } else {
            let min = points
                .iter()
                .map(|x| displacement(x).iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min);
            if min > resolution {
                return Ok(IntersectionVerdict::Fail);
            }
            heuristic = true;
        }
    }
    Ok(if heuristic {
        IntersectionVerdict::HeuristicPass
    } else {
        IntersectionVerdict::Pass
    })
}

// ---------------------------------------------------------------------------
// Fiber factors.

/// The fiber map `F` of a skew map `(A x, F(y))`, provided every
/// base-dependent coefficient and the base displacement are below `tol`.
pub fn extract_fiber_factor(m: &SkewMap, tol: f64) -> Result<SkewMap> {
    let d = m.base_dim();
    let mut worst: Option<(f64, Vec<i64>)> = None;
    for (k, v) in m.pert.iter() {
        let base_dependent = k[..d].iter().any(|&x| x != 0);
        let norm = if base_dependent {
            v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        } else {
            v[..d].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
        };
        if norm >= tol && worst.as_ref().is_none_or(|(w, _)| norm > *w) {
            worst = Some((norm, k.clone()));
        }
    }
    if let Some((coupling, at)) = worst {
        return Err(Error::NotFiberFactor { coupling, at });
    }
    let fiber = m.pert.components(d, m.fiber_dim()).fiber_part();
    SkewMap::fiber(m.theta.clone(), fiber)
}

// ---------------------------------------------------------------------------
// Manufactured extensions.

/// An action by skew extensions together with its translation cocycles.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtensionPair {
    pub a1: LatticeMatrix,
    pub a2: LatticeMatrix,
    pub theta1: Vec<Rational>,
    pub theta2: Vec<Rational>,
    /// Oscillating parts of the cocycles (zero average), maps on `T^d`.
    pub tau1: FourierMap,
    pub tau2: FourierMap,
    /// The perturbed generators.
    pub alpha1: SkewMap,
    pub alpha2: SkewMap,
}

/// `alpha_i = W^{-1} o T_{A_i, theta_i + tau_i} o W` with `W = id + w`.
///
/// The oscillating cocycle parts `tau_i` must have zero average; the
/// caller is responsible for their compatibility, which
/// [`reduce_to_average`] checks.
#[allow(clippy::too_many_arguments)]
pub fn extension_pair(
    a1: &LatticeMatrix,
    a2: &LatticeMatrix,
    theta1: &[Rational],
    theta2: &[Rational],
    tau1: &FourierMap,
    tau2: &FourierMap,
    w: &FourierMap,
    p: &CompositionParams,
) -> Result<ExtensionPair> {
    if !a1.commutes_with(a2) {
        return Err(Error::NotCommuting);
    }
    if theta1.len() != theta2.len() {
        return Err(Error::Dimension("fiber translations have different lengths".into()));
    }
    let (d, s) = (a1.dim(), theta1.len());
    check_tau(tau1, d)?;
    check_tau(tau2, d)?;
    if tau1.target_dim() != s || tau2.target_dim() != s {
        return Err(Error::Dimension("cocycles need one component per fiber variable".into()));
    }
    if w.base_dim() != d || w.fiber_dim() != s || w.target_dim() != d + s {
        return Err(Error::Dimension("conjugacy does not act on T^d x T^s".into()));
    }
    let winv = invert_near_identity(w, p)?.map;
    let build = |a: &LatticeMatrix, theta: &[Rational], tau: &FourierMap| -> Result<SkewMap> {
        let model = extension(a, theta, tau)?;
        Ok(model.conjugate(w, &winv, p)?.value)
    };
    let zero_mean = |t: &FourierMap| {
        let mut t = t.without_base_average();
        t.symmetrize();
        t
    };
    Ok(ExtensionPair {
        a1: a1.clone(),
        a2: a2.clone(),
        theta1: vec_fract(theta1),
        theta2: vec_fract(theta2),
        tau1: zero_mean(tau1),
        tau2: zero_mean(tau2),
        alpha1: build(a1, theta1, tau1)?,
        alpha2: build(a2, theta2, tau2)?,
    })
}

/// Compatible cocycles `phi0 - phi0 o A_i` from a random potential `phi0`.
pub fn random_cocycles(a1: &LatticeMatrix, a2: &LatticeMatrix, s: usize, spec: &RandomSpec) -> Result<(FourierMap, FourierMap)> {
    spec.validate()?;
    let phi0 = spec.sample(a1.dim(), 0, s, false);
    Ok((phi0.sub(&phi0.pullback(a1)), phi0.sub(&phi0.pullback(a2))))
}

/// [`extension_pair`] with random cocycles and a random conjugacy.
pub fn manufacture_extension_pair(
    a1: &LatticeMatrix,
    a2: &LatticeMatrix,
    theta1: &[Rational],
    theta2: &[Rational],
    cocycle: &RandomSpec,
    conjugacy: &RandomSpec,
    p: &CompositionParams,
) -> Result<ExtensionPair> {
    conjugacy.validate()?;
    let (d, s) = (a1.dim(), theta1.len());
    let (tau1, tau2) = random_cocycles(a1, a2, s, cocycle)?;
    let w = conjugacy.sample(d, s, d + s, false);
    extension_pair(a1, a2, theta1, theta2, &tau1, &tau2, &w, p)
}

// ---------------------------------------------------------------------------
// End-to-end pipeline.

/// Settings of [`rational_average_pipeline`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineParams {
    pub schedule: KamSchedule,
    #[serde(default)]
    pub options: KamOptions,
    #[serde(default = "default_gate")]
    pub gate: f64,
    #[serde(default = "default_fiber_gate")]
    pub fiber_gate: f64,
}

fn default_gate() -> f64 {
    DEFAULT_GATE
}

fn default_fiber_gate() -> f64 {
    FIBER_GATE
}

/// Summary of the iteration inside the pipeline.
#[derive(Clone, Debug, Serialize)]
pub struct KamSummary {
    pub status: KamStatus,
    pub iterations: usize,
    pub eps0: Vec<f64>,
    pub final_eps: [f64; 2],
    pub final_residuals: [f64; 2],
    pub total_budget: f64,
}

impl From<&KamReport> for KamSummary {
    fn from(r: &KamReport) -> Self {
        KamSummary {
            status: r.status,
            iterations: r.iterations.len(),
            eps0: r.iterations.iter().map(|i| i.eps0).collect(),
            final_eps: r.final_eps,
            final_residuals: r.final_residuals,
            total_budget: r.total_budget,
        }
    }
}

/// Everything measured along the pipeline.
#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub fiber_data: RationalFiberData,
    pub delta_star: Option<f64>,
    pub subaction: Subaction,
    pub reduction: AverageReduction,
    pub subaction_commutation_defect: f64,
    pub kam: KamSummary,
    /// Largest base-dependent coefficient of each conjugated generator.
    pub fiber_factor_tol: f64,
    pub periodicity_defects: [f64; 2],
    pub first: PeriodicConjugacy,
    pub second: PeriodicConjugacy,
    /// `|v~ o R_{theta_1} - v~|_0`.
    pub fiber_translation_defect: f64,
    /// Sup-majorants of `U alpha(e_i) U^{-1} - T_{A_i, theta_i}`.
    pub final_residuals: [f64; 2],
    pub budget: f64,
}

/// Output of [`rational_average_pipeline`].
#[derive(Clone, Debug, Serialize)]
pub struct PipelineOutput {
    /// `U - id`.
    pub conjugacy: FourierMap,
    pub report: PipelineReport,
}

fn signed_power(m: &SkewMap, e: i64, p: &CompositionParams) -> Result<Budgeted<SkewMap>> {
    let (d, s) = (m.base_dim(), m.fiber_dim());
    if e == 0 {
        return Ok(Budgeted {
            value: SkewMap::near_identity(FourierMap::zero(d, s, d + s)),
            budget: 0.0,
        });
    }
    let (base, budget0) = if e > 0 {
        (m.clone(), 0.0)
    } else {
        let inv = m.inverse(p)?;
        (inv.value, inv.budget)
    };
    let pw = base.power(e.unsigned_abs() as u32, p)?;
    Ok(Budgeted {
        value: pw.value,
        budget: pw.budget + budget0,
    })
}

fn subaction_element(x1: &SkewMap, x2: &SkewMap, e: (i64, i64), p: &CompositionParams) -> Result<Budgeted<SkewMap>> {
    let u = signed_power(x1, e.0, p)?;
    let v = signed_power(x2, e.1, p)?;
    let w = u.value.compose(&v.value, p)?;
    Ok(Budgeted {
        value: w.value,
        budget: u.budget + v.budget + w.budget,
    })
}

/// Conjugates a perturbed action by skew extensions with rational fiber
/// averages to its model `T_{A_i, theta_i}`.
pub fn rational_average_pipeline(pair: &ExtensionPair, params: &PipelineParams) -> Result<PipelineOutput> {
    let p = &params.options.composition;
    let (a1, a2) = (&pair.a1, &pair.a2);
    let (d, s) = (a1.dim(), pair.theta1.len());
    if pair.alpha1.a != *a1 || pair.alpha2.a != *a2 {
        return Err(Error::Invalid("generators do not lie over the given automorphisms".into()));
    }
    let mut budget = 0.0;

    let fiber_data = RationalFiberData::new(&pair.theta1, &pair.theta2).map_err(|e| e.at_stage("fiber-data"))?;
    let subaction = choose_subaction(&fiber_data, a1, a2).map_err(|e| e.at_stage("fiber-data"))?;

    let reduction = reduce_to_average(&pair.tau1, &pair.tau2, a1, a2, &params.options.orbit, params.gate)
        .map_err(|e| e.at_stage("reduction"))?;
    let shear = fiber_shear(&reduction.phi);
    let unshear = shear.scale(-1.0);
    // alpha' = h alpha h^{-1} with h = id + shear.
    let reduced = |m: &SkewMap| -> Result<Budgeted<SkewMap>> { m.conjugate(&unshear, &shear, p) };
    let r1 = reduced(&pair.alpha1).map_err(|e| e.at_stage("reduction"))?;
    let r2 = reduced(&pair.alpha2).map_err(|e| e.at_stage("reduction"))?;
    budget += r1.budget + r2.budget;
    let (x1, x2) = (r1.value, r2.value);

    let f = subaction_element(&x1, &x2, subaction.m, p).map_err(|e| e.at_stage("subaction"))?;
    let g = subaction_element(&x1, &x2, subaction.n, p).map_err(|e| e.at_stage("subaction"))?;
    budget += f.budget + g.budget;
    let mut fm = f.value;
    let mut gm = g.value;
    if !vec_is_integer(&fm.theta) || !vec_is_integer(&gm.theta) {
        return Err(Error::Invalid("subaction generators translate the fiber".into()).at_stage("subaction"));
    }
    fm.theta = vec![Rational::ZERO; s];
    gm.theta = vec![Rational::ZERO; s];
    let system = SkewSystem::new(fm, gm, p).map_err(|e| e.at_stage("subaction"))?;
    let subaction_commutation_defect = system.commutation_defect;

    let kam = run_kam(&system, &params.schedule, &params.options).map_err(|e| e.at_stage("kam"))?;
    if kam.status != KamStatus::Converged {
        let from = kam.iterations.first().map_or(0.0, |i| i.eps0);
        return Err(Error::Divergence {
            iteration: kam.iterations.len(),
            from,
            to: kam.final_eps[0],
        }
        .at_stage("kam"));
    }
    budget += kam.total_budget;
    let hk = kam.composed.clone();
    let hk_inv = invert_near_identity(&hk, p).map_err(|e| e.at_stage("kam"))?;
    budget += hk_inv.budget;

    let tol = 10.0 * kam.final_residuals[0].max(kam.final_residuals[1]).max(kam.final_eps[0]).max(1e-13);
    let factor = |x: &SkewMap| -> Result<SkewMap> {
        let c = x.conjugate(&hk, &hk_inv.map, p)?;
        extract_fiber_factor(&c.value, tol)
    };
    let phi1 = factor(&x1).map_err(|e| e.at_stage("fiber-factor"))?;
    let phi2 = factor(&x2).map_err(|e| e.at_stage("fiber-factor"))?;

    let q = subaction.q;
    let first = periodic_fiber_conjugacy(&phi1, &pair.theta1, q, params.fiber_gate, p).map_err(|e| e.at_stage("first-periodic"))?;
    let v = &first.v;
    let vinv = invert_near_identity(v, p).map_err(|e| e.at_stage("first-periodic"))?;
    let g_tilde = phi2.conjugate(&vinv.map, v, p).map_err(|e| e.at_stage("second-periodic"))?.value;
    let second =
        periodic_fiber_conjugacy(&g_tilde, &pair.theta2, q, params.fiber_gate, p).map_err(|e| e.at_stage("second-periodic"))?;
    let vt = &second.v;
    let fiber_translation_defect = vt.pullback_skew(&LatticeMatrix::identity(0), &pair.theta1).sub(vt).cr_majorant(0);

    // V~ o V on the fiber, lifted to T^d x T^s.
    let vv = SkewMap::near_identity(vt.clone())
        .compose(&SkewMap::near_identity(v.clone()), p)
        .map_err(|e| e.at_stage("assembly"))?;
    budget += vv.budget;
    let w = vv.value.pert;
    let lifted = FourierMap::from_raw(
        d,
        s,
        d + s,
        w.iter()
            .map(|(k, c)| {
                let mut key = vec![0; d];
                key.extend_from_slice(k);
                let mut val = vec![num_complex::Complex64::new(0.0, 0.0); d];
                val.extend_from_slice(c);
                (key, val)
            })
            .collect(),
    );
    let big_v = SkewMap::near_identity(lifted);
    let u = big_v
        .compose(&SkewMap::near_identity(hk_inv.map.clone()), p)
        .and_then(|x| {
            budget += x.budget;
            x.value.compose(&SkewMap::near_identity(shear.clone()), p)
        })
        .map_err(|e| e.at_stage("assembly"))?;
    budget += u.budget;
    let u = u.value;
    let uinv = invert_near_identity(&u.pert, p).map_err(|e| e.at_stage("assembly"))?;
    budget += uinv.budget;
    let residual = |alpha: &SkewMap, theta: &[Rational]| -> Result<f64> {
        let c = alpha.conjugate(&uinv.map, &u.pert, p)?;
        Ok(c.value.distance(&SkewMap::model(alpha.a.clone(), theta.to_vec())))
    };
    let final_residuals = [
        residual(&pair.alpha1, &pair.theta1).map_err(|e| e.at_stage("verification"))?,
        residual(&pair.alpha2, &pair.theta2).map_err(|e| e.at_stage("verification"))?,
    ];
    let delta_star = fiber_data.delta_star.map(|r| r.to_f64());
    Ok(PipelineOutput {
        conjugacy: u.pert,
        report: PipelineReport {
            fiber_data,
            delta_star,
            subaction,
            reduction,
            subaction_commutation_defect,
            kam: KamSummary::from(&kam),
            fiber_factor_tol: tol,
            periodicity_defects: [first.periodicity_defect, second.periodicity_defect],
            first,
            second,
            fiber_translation_defect,
            final_residuals,
            budget,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d).unwrap()
    }

    #[test]
    fn half_and_third() {
        let data = RationalFiberData::new(&[r(1, 2)], &[r(1, 3)]).unwrap();
        assert_eq!(data.m0, 6);
        assert_eq!(data.sigma.len() + data.lambda.len(), 13 * 13);
        assert!(data.sigma.contains(&(2, 3)) && data.sigma.contains(&(0, 0)));
        assert!(data.lambda.contains(&(1, 0)));
        assert_eq!(data.delta_star, Some(r(1, 6)));
    }

    #[test]
    fn q_two_closed_form() {
        let p = CompositionParams::default();
        let spec = RandomSpec { seed: 3, amplitude: 1e-3, bandwidth: 3 };
        let v0 = spec.sample(0, 1, 1, false);
        let rot = SkewMap::fiber(vec![r(1, 2)], FourierMap::zero(0, 1, 1)).unwrap();
        let v0inv = invert_near_identity(&v0, &p).unwrap().map;
        let phi = rot.conjugate(&v0, &v0inv, &p).unwrap().value;
        let out = periodic_fiber_conjugacy(&phi, &[r(1, 2)], 2, FIBER_GATE, &p).unwrap();
        assert!(out.v.max_coeff_diff(&phi.pert.scale(0.5)) < 1e-12);
        assert!(out.conjugacy_residual < 1e-9, "{}", out.conjugacy_residual);
    }

    #[test]
    fn flat_translation_has_no_intersection() {
        let a = LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap();
        let model = SkewMap::model(a.clone(), vec![Rational::ZERO]);
        assert_eq!(check_intersection_property(&model, 3, 0.05, 1).unwrap(), IntersectionVerdict::Pass);
        let shifted = SkewMap::new(a, vec![Rational::ZERO], FourierMap::constant(2, 1, &[0.0, 0.0, 0.01])).unwrap();
        assert_eq!(check_intersection_property(&shifted, 3, 0.0, 1).unwrap(), IntersectionVerdict::Fail);
    }
}
