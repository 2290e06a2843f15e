//! Twisted and untwisted cohomological equations over toral automorphisms,
//! solved coefficient-wise by finite sums along dual orbits.
//!
//! For `omega o A - eta omega = theta` the Fourier coefficients satisfy
//! `omega_{A* n} - eta omega_n = theta_n`, which gives the two expressions
//!
//! * forward:  `omega_n = -sum_{l >= 0} eta^{-(l+1)} theta_{(A*)^l n}`
//! * backward: `omega_n =  sum_{l <= -1} eta^{-(l+1)} theta_{(A*)^l n}`
//!
//! and `omega_0 = theta_0 / (1 - eta)` at the zero frequency. The forward
//! form is used for frequencies dominated by the unstable or center part of
//! `A*`, the backward form for stable-dominated ones.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fourier::{FourierMap, ZERO};
use crate::lattice::{classify_mostly_in, is_ergodic, spectral_splitting, sorted_eigenvalues, Class, LatticeMatrix, SpectralSplitting, DEFAULT_SPLIT_TOL};

/// Defensive truncation of orbit sums.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSumParams {
    pub max_terms: usize,
    pub tail_tol: f64,
}

impl Default for OrbitSumParams {
    fn default() -> Self {
        OrbitSumParams {
            max_terms: 200,
            tail_tol: 1e-14,
        }
    }
}

impl OrbitSumParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_terms < 1 {
            return Err(Error::Invalid("max_terms must be at least 1".into()));
        }
        if !(self.tail_tol > 0.0) {
            return Err(Error::Invalid("tail_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Forward,
    Backward,
}

/// A single truncated orbit sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitSum {
    pub value: Complex64,
    pub terms: usize,
    /// Zero when the orbit provably left the support; otherwise a bound on
    /// the omitted terms (infinite when none is available).
    pub tail_bound: f64,
    pub truncated: bool,
}

// ---------------------------------------------------------------------------
// Eigen-decompositions through null vectors.

/// Clusters of numerically equal eigenvalues, each with its multiplicity.
fn clusters(ev: &[Complex64]) -> Vec<(Complex64, usize)> {
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    for &z in ev {
        if let Some(c) = out.iter_mut().find(|c| (c.0 - z).norm() < 1e-7 * (1.0 + z.norm())) {
            c.1 += 1;
        } else {
            out.push((z, 1));
        }
    }
    out
}

/// `M = Q diag(lambda) Q^{-1}` for a diagonalizable real matrix; `None`
/// when the eigenvectors found do not form a basis.
pub(crate) fn eigen_decomposition(m: &DMatrix<f64>) -> Option<(Vec<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>)> {
    let d = m.nrows();
    let mc = m.map(|v| Complex64::new(v, 0.0));
    let ev = sorted_eigenvalues(m);
    let mut lams = Vec::with_capacity(d);
    let mut q = DMatrix::<Complex64>::zeros(d, d);
    let mut col = 0;
    for (lam, mult) in clusters(&ev) {
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * lam;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
        for &i in order.iter().take(mult) {
            let v = vt.row(i).adjoint();
            // Refine the eigenvalue with the Rayleigh quotient.
            let mv = &mc * &v;
            let rq = v.dotc(&mv) / v.dotc(&v);
            q.set_column(col, &v);
            lams.push(rq);
            col += 1;
        }
    }
    let qi = q.clone().try_inverse()?;
    let recon = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lams.clone())) * &qi;
    let err = (recon - mc).norm();
    if err > 1e-8 * (1.0 + m.norm()) {
        return None;
    }
    Some((lams, q, qi))
}

fn condition_number(q: &DMatrix<Complex64>) -> f64 {
    let sv = q.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// Simultaneous eigenstructure of a twist `A` (refined by a commuting `B`).
#[derive(Clone, Debug)]
pub struct TwistSpectrum {
    pub matrix: LatticeMatrix,
    /// Eigenvalues of `A` on the columns of `eigenbasis`.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues of the partner on the same columns (empty without partner).
    pub partner_eigenvalues: Vec<Complex64>,
    pub eigenbasis: DMatrix<Complex64>,
    pub eigenbasis_inverse: DMatrix<Complex64>,
    pub semisimple: bool,
    pub condition: f64,
}

/// Coupling used to separate eigenvalues shared by `A` in `A + cB`.
const GENERIC_COUPLING: f64 = std::f64::consts::SQRT_2 / std::f64::consts::PI;

impl TwistSpectrum {
    pub fn new(a: &LatticeMatrix, partner: Option<&LatticeMatrix>) -> TwistSpectrum {
        let d = a.dim();
        let af = a.to_f64();
        let mut m = af.clone();
        if let Some(b) = partner {
            m += b.to_f64() * GENERIC_COUPLING;
        }
        let semisimple_a = !spectral_splitting(a, DEFAULT_SPLIT_TOL).non_semisimple;
        let semisimple_b = partner.is_none_or(|b| !spectral_splitting(b, DEFAULT_SPLIT_TOL).non_semisimple);
        let fallback = || TwistSpectrum {
            matrix: a.clone(),
            eigenvalues: sorted_eigenvalues(&af),
            partner_eigenvalues: Vec::new(),
            eigenbasis: DMatrix::identity(d, d),
            eigenbasis_inverse: DMatrix::identity(d, d),
            semisimple: false,
            condition: f64::INFINITY,
        };
        if !(semisimple_a && semisimple_b) {
            return fallback();
        }
        let Some((_, q, qi)) = eigen_decomposition(&m) else {
            return fallback();
        };
        let diag_of = |x: &DMatrix<f64>| -> (Vec<Complex64>, f64) {
            let xc = x.map(|v| Complex64::new(v, 0.0));
            let t = &qi * xc * &q;
            let lam: Vec<Complex64> = (0..d).map(|j| t[(j, j)]).collect();
            let mut off = 0.0f64;
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        off = off.max(t[(i, j)].norm());
                    }
                }
            }
            (lam, off)
        };
        let (lams, off_a) = diag_of(&af);
        let (mus, off_b) = match partner {
            Some(b) => diag_of(&b.to_f64()),
            None => (Vec::new(), 0.0),
        };
        let scale = 1.0 + af.norm() + partner.map_or(0.0, |b| b.to_f64().norm());
        TwistSpectrum {
            matrix: a.clone(),
            eigenvalues: lams,
            partner_eigenvalues: mus,
            condition: condition_number(&q),
            eigenbasis: q,
            eigenbasis_inverse: qi,
            semisimple: off_a.max(off_b) < 1e-8 * scale,
        }
    }
}

// ---------------------------------------------------------------------------
// Orbit bookkeeping for a dual automorphism.

pub(crate) struct OrbitContext {
    dual: LatticeMatrix,
    dual_inv: LatticeMatrix,
    /// Eigen-coordinates `c(n) = Q^{-1} n` and eigenvalue moduli of `A*`;
    /// absent when `A*` is not diagonalizable.
    coords: Option<(DMatrix<Complex64>, Vec<f64>)>,
    splitting: SpectralSplitting,
}

impl OrbitContext {
    pub(crate) fn from_dual(dual: &LatticeMatrix) -> OrbitContext {
        let splitting = spectral_splitting(dual, DEFAULT_SPLIT_TOL);
        let coords = if splitting.non_semisimple {
            None
        } else {
            eigen_decomposition(&dual.to_f64()).map(|(lams, _, qi)| (qi, lams.iter().map(|z| z.norm()).collect()))
        };
        OrbitContext {
            dual: dual.clone(),
            dual_inv: dual.inverse(),
            coords,
            splitting,
        }
    }

    fn coordinates(&self, n: &[i64]) -> Option<Vec<f64>> {
        let (qi, _) = self.coords.as_ref()?;
        Some(
            (0..qi.nrows())
                .map(|j| {
                    (0..qi.ncols())
                        .map(|i| qi[(j, i)] * n[i] as f64)
                        .sum::<Complex64>()
                        .norm()
                })
                .collect(),
        )
    }

    /// Per-coordinate bound over a set of base frequencies.
    fn support_bounds<'a>(&self, support: impl Iterator<Item = &'a [i64]>) -> Vec<f64> {
        let d = self.dual.dim();
        let mut w = vec![0.0; d];
        for n in support {
            if let Some(c) = self.coordinates(n) {
                for (a, b) in w.iter_mut().zip(c) {
                    *a = f64::max(*a, b);
                }
            }
        }
        w
    }

    /// True when `(A*)^l n` stays outside the support for all `l >= 0`
    /// (forward) or all `l <= 0` (backward).
    fn escaped(&self, n: &[i64], bounds: &[f64], side: Side) -> bool {
        let Some((_, moduli)) = &self.coords else {
            return false;
        };
        let c = self.coordinates(n).expect("coordinates available");
        c.iter().zip(bounds).zip(moduli).any(|((&cj, &wj), &r)| {
            let growing = match side {
                Side::Forward => r > 1.0 + DEFAULT_SPLIT_TOL,
                Side::Backward => r < 1.0 - DEFAULT_SPLIT_TOL,
            };
            growing && cj > wj * (1.0 + 1e-9) + 1e-9
        })
    }

    fn step(&self, n: &[i64], side: Side) -> Option<Vec<i64>> {
        match side {
            Side::Forward => self.dual.apply(n),
            Side::Backward => self.dual_inv.apply(n),
        }
    }

    fn class(&self, n: &[i64]) -> Class {
        classify_mostly_in(n, &self.splitting).unwrap_or(Class::C)
    }
}

/// Truncated orbit sums for every component `j` with its own `eta_j`.
fn orbit_sums(
    theta: &FourierMap,
    ctx: &OrbitContext,
    bounds: &[f64],
    etas: &[Complex64],
    n: &[i64],
    m: &[i64],
    side: Side,
    p: &OrbitSumParams,
) -> (Vec<Complex64>, usize, bool) {
    let k = theta.target_dim();
    let mut acc = vec![ZERO; k];
    let mut key: Vec<i64> = Vec::with_capacity(n.len() + m.len());
    let mut freq = match side {
        Side::Forward => Some(n.to_vec()),
        Side::Backward => ctx.step(n, Side::Backward),
    };
    // Weight of the current term for each component.
    let mut weight: Vec<Complex64> = etas
        .iter()
        .map(|&eta| match side {
            Side::Forward => -Complex64::new(1.0, 0.0) / eta,
            Side::Backward => Complex64::new(1.0, 0.0),
        })
        .collect();
    let mut terms = 0;
    while let Some(f) = freq {
        if ctx.escaped(&f, bounds, side) {
            return (acc, terms, false);
        }
        if terms >= p.max_terms {
            return (acc, terms, true);
        }
        key.clear();
        key.extend_from_slice(&f);
        key.extend_from_slice(m);
        if let Some(c) = theta.get(&key) {
            for j in 0..k {
                acc[j] += weight[j] * c[j];
            }
        }
        for (w, &eta) in weight.iter_mut().zip(etas) {
            match side {
                Side::Forward => *w /= eta,
                Side::Backward => *w *= eta,
            }
        }
        terms += 1;
        freq = ctx.step(&f, side);
    }
    // Integer overflow: the orbit has left every bounded set.
    (acc, terms, false)
}

/// The single coefficient `omega_{(n,m)}` for a scalar `theta`.
pub fn orbit_sum_coefficient(
    theta: &FourierMap,
    mdual: &LatticeMatrix,
    eta: Complex64,
    n: &[i64],
    m: &[i64],
    side: Side,
    p: &OrbitSumParams,
) -> Result<OrbitSum> {
    p.validate()?;
    if theta.target_dim() != 1 {
        return Err(Error::Dimension("orbit sums take a scalar map".into()));
    }
    let d = theta.base_dim();
    if n.iter().all(|&v| v == 0) {
        let mut key = n.to_vec();
        key.extend_from_slice(m);
        let t0 = theta.coeff(&key)[0];
        if (eta - 1.0).norm() < 1e-14 {
            if t0.norm() > 0.0 {
                return Err(Error::ZeroModeObstruction);
            }
            return Ok(OrbitSum {
                value: ZERO,
                terms: 0,
                tail_bound: 0.0,
                truncated: false,
            });
        }
        return Ok(OrbitSum {
            value: t0 / (1.0 - eta),
            terms: 1,
            tail_bound: 0.0,
            truncated: false,
        });
    }
    let ctx = OrbitContext::from_dual(mdual);
    let bounds = ctx.support_bounds(theta.iter().map(|(k, _)| &k[..d]).filter(|n| n.iter().any(|&v| v != 0)));
    let (acc, terms, truncated) = orbit_sums(theta, &ctx, &bounds, &[eta], n, m, side, p);
    let tail_bound = if !truncated {
        0.0
    } else {
        let r = match side {
            Side::Forward => 1.0 / eta.norm(),
            Side::Backward => eta.norm(),
        };
        if r < 1.0 {
            theta.max_coeff() * r.powi(terms as i32) / (1.0 - r)
        } else {
            f64::INFINITY
        }
    };
    Ok(OrbitSum {
        value: acc[0],
        terms,
        tail_bound,
        truncated,
    })
}

/// `sum_{|i| <= window} theta_{((A*)^i n, m)}` for a scalar `theta`.
///
/// For data solvable over `A` the full orbit sum vanishes, so the window
/// sums measure how fast the obstruction decays along the orbit. Frequencies
/// whose coordinates overflow `i64` end the walk in that direction.
pub fn obstruction_window_sum(theta: &FourierMap, a: &LatticeMatrix, n: &[i64], m: &[i64], window: i64) -> Result<Complex64> {
    if theta.target_dim() != 1 {
        return Err(Error::Dimension("orbit sums take a scalar map".into()));
    }
    if n.len() != a.dim() || n.len() != theta.base_dim() || m.len() != theta.fiber_dim() {
        return Err(Error::Dimension("frequency does not match the map".into()));
    }
    if window < 0 {
        return Err(Error::Invalid(format!("window must be nonnegative, got {window}")));
    }
    let value = |freq: &[i64]| {
        let mut key = freq.to_vec();
        key.extend_from_slice(m);
        theta.coeff(&key)[0]
    };
    let dual = a.dual();
    let back = dual.inverse();
    let mut acc = value(n);
    for step in [&dual, &back] {
        let mut freq = n.to_vec();
        for _ in 0..window {
            match step.apply(&freq) {
                Some(next) => freq = next,
                None => break,
            }
            acc += value(&freq);
        }
    }
    Ok(acc)
}

/// Solves `omega_j o A - eta_j omega_j = theta_j` for every component.
///
/// Components with `eta_j = 1` get a zero average (their `n = 0` data must
/// vanish, which callers check). Returns the map and any warnings.
pub(crate) fn solve_components(
    theta: &FourierMap,
    ctx: &OrbitContext,
    etas: &[Complex64],
    p: &OrbitSumParams,
) -> Result<(FourierMap, Vec<String>)> {
    let d = theta.base_dim();
    let k = theta.target_dim();
    let mut warnings = Vec::new();
    let mut out = FourierMap::zero(d, theta.fiber_dim(), k);
    let nonzero = |n: &[i64]| n.iter().any(|&v| v != 0);
    let bounds = ctx.support_bounds(theta.iter().map(|(key, _)| &key[..d]).filter(|n| nonzero(n)));

    let mut candidates: BTreeSet<Vec<i64>> = BTreeSet::new();
    let mut capped = false;
    for (key, v) in theta.iter() {
        let (n, m) = key.split_at(d);
        if !nonzero(n) {
            let mut w = vec![ZERO; k];
            for j in 0..k {
                if (etas[j] - 1.0).norm() < 1e-14 {
                    if v[j].norm() > 0.0 {
                        return Err(Error::ZeroModeObstruction);
                    }
                } else {
                    w[j] = v[j] / (1.0 - etas[j]);
                }
            }
            out.set(key, w);
            continue;
        }
        for (side, stop_class) in [(Side::Backward, Class::S), (Side::Forward, Class::U)] {
            let mut f = if side == Side::Backward {
                Some(n.to_vec())
            } else {
                ctx.step(n, Side::Forward)
            };
            let mut steps = 0;
            while let Some(cur) = f {
                let mut c = cur.clone();
                c.extend_from_slice(m);
                candidates.insert(c);
                if ctx.escaped(&cur, &bounds, side) && ctx.class(&cur) == stop_class {
                    break;
                }
                steps += 1;
                if steps >= p.max_terms {
                    capped = true;
                    break;
                }
                f = ctx.step(&cur, side);
            }
        }
    }
    let mut truncated = false;
    for key in candidates {
        let (n, m) = key.split_at(d);
        let side = match ctx.class(n) {
            Class::S => Side::Backward,
            Class::U | Class::C => Side::Forward,
        };
        let (acc, _, t) = orbit_sums(theta, ctx, &bounds, etas, n, m, side, p);
        truncated |= t;
        out.set(&key, acc);
    }
    if capped || truncated {
        warnings.push(format!(
            "orbit enumeration reached max_terms = {} without an escape certificate",
            p.max_terms
        ));
    }
    Ok((out, warnings))
}

// ---------------------------------------------------------------------------
// Public solvers.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquationKind {
    Twisted,
    Untwisted,
}

/// Relative compatibility gate applied before solving.
pub const DEFAULT_GATE: f64 = 1e-10;

/// Solution of a pair of cohomological equations with its residuals.
#[derive(Clone, Debug, Serialize)]
pub struct CohomologySolution {
    pub omega: FourierMap,
    pub residual_a: f64,
    pub residual_b: f64,
    pub warnings: Vec<String>,
    /// Condition number of the simultaneous eigenbasis (twisted case).
    pub condition: Option<f64>,
}

/// `pullback(omega, M) - L omega` with `L = M` (twisted) or `I` (untwisted).
pub fn difference(kind: EquationKind, omega: &FourierMap, m: &LatticeMatrix) -> FourierMap {
    let pulled = omega.pullback(m);
    match kind {
        EquationKind::Untwisted => pulled.sub(omega),
        EquationKind::Twisted => pulled.sub(&omega.apply_matrix(&m.to_f64())),
    }
}

/// Sup-majorants of both defect maps.
pub fn residual(
    kind: EquationKind,
    omega: &FourierMap,
    r: &FourierMap,
    s: &FourierMap,
    a: &LatticeMatrix,
    b: &LatticeMatrix,
) -> (f64, f64) {
    (
        difference(kind, omega, a).sub(r).cr_majorant(0),
        difference(kind, omega, b).sub(s).cr_majorant(0),
    )
}

fn check_pair(a: &LatticeMatrix, b: &LatticeMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("generators have different dimensions".into()));
    }
    if !a.commutes_with(b) {
        return Err(Error::NotCommuting);
    }
    if !is_ergodic(a) || !is_ergodic(b) {
        return Err(Error::NotErgodic);
    }
    Ok(())
}

fn scale_of(r: &FourierMap, s: &FourierMap) -> f64 {
    r.cr_majorant(0).max(s.cr_majorant(0))
}

/// Untwisted potential of `theta` (zero base average) along `A`.
pub(crate) fn untwisted_potential(theta: &FourierMap, a: &LatticeMatrix, p: &OrbitSumParams) -> Result<(FourierMap, Vec<String>)> {
    let ctx = OrbitContext::from_dual(&a.dual());
    let etas = vec![Complex64::new(1.0, 0.0); theta.target_dim()];
    let (mut omega, w) = solve_components(&theta.without_base_average(), &ctx, &etas, p)?;
    omega.symmetrize();
    Ok((omega, w))
}

/// Twisted potential of `theta` along `A`, diagonalized jointly with `B`.
pub(crate) fn twisted_potential(
    theta: &FourierMap,
    spec: &TwistSpectrum,
    p: &OrbitSumParams,
) -> Result<(FourierMap, Vec<String>)> {
    if !spec.semisimple {
        return Err(Error::JordanBlocks);
    }
    let ctx = OrbitContext::from_dual(&spec.matrix.dual());
    let eig = theta.apply_complex_matrix(&spec.eigenbasis_inverse);
    let (w, warnings) = solve_components(&eig, &ctx, &spec.eigenvalues, p)?;
    let mut omega = w.apply_complex_matrix(&spec.eigenbasis);
    omega.symmetrize();
    Ok((omega, warnings))
}

/// `Omega o T_{A,0} - Omega = R` and `Omega o T_{B,0} - Omega = S`.
pub fn solve_untwisted(
    r: &FourierMap,
    s: &FourierMap,
    a: &LatticeMatrix,
    b: &LatticeMatrix,
    p: &OrbitSumParams,
    gate: f64,
) -> Result<CohomologySolution> {
    p.validate()?;
    check_pair(a, b)?;
    let scale = scale_of(r, s);
    let avg = r.base_average().cr_majorant(0).max(s.base_average().cr_majorant(0));
    if avg > 1e-12 * scale.max(f64::MIN_POSITIVE) && avg > 0.0 {
        return Err(Error::NonzeroAverage(avg));
    }
    let defect = crate::splitting::op_l2(r, s, a, b).cr_majorant(0);
    if defect > gate * scale {
        return Err(Error::NotCocycle {
            defect,
            gate: gate * scale,
        });
    }
    let (omega, warnings) = untwisted_potential(r, a, p)?;
    let (residual_a, residual_b) = residual(EquationKind::Untwisted, &omega, r, s, a, b);
    Ok(CohomologySolution {
        omega,
        residual_a,
        residual_b,
        warnings,
        condition: None,
    })
}

/// `Omega o T_{A,0} - A Omega = R` and `Omega o T_{B,0} - B Omega = S`.
pub fn solve_twisted(
    r: &FourierMap,
    s: &FourierMap,
    a: &LatticeMatrix,
    b: &LatticeMatrix,
    p: &OrbitSumParams,
    gate: f64,
) -> Result<CohomologySolution> {
    p.validate()?;
    check_pair(a, b)?;
    if r.target_dim() != a.dim() || s.target_dim() != a.dim() {
        return Err(Error::Dimension("twisted data must have one component per base variable".into()));
    }
    let spec = TwistSpectrum::new(a, Some(b));
    if !spec.semisimple {
        return Err(Error::JordanBlocks);
    }
    let scale = scale_of(r, s);
    let defect = crate::splitting::op_l1(r, s, a, b).cr_majorant(0);
    if defect > gate * scale {
        return Err(Error::NotCocycle {
            defect,
            gate: gate * scale,
        });
    }
    let (omega, mut warnings) = twisted_potential(r, &spec, p)?;
    if spec.condition > 1e8 {
        warnings.push(format!("ill-conditioned eigenbasis (condition {:.3e})", spec.condition));
    }
    let (residual_a, residual_b) = residual(EquationKind::Twisted, &omega, r, s, a, b);
    Ok(CohomologySolution {
        omega,
        residual_a,
        residual_b,
        warnings,
        condition: Some(spec.condition),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> LatticeMatrix {
        LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn single_frequency_forward_sum() {
        let mut theta = FourierMap::zero(2, 0, 1);
        theta.set(&[1, 0], vec![Complex64::new(0.3, 0.1)]);
        let r = orbit_sum_coefficient(&theta, &cat().dual(), Complex64::new(2.0, 0.0), &[1, 0], &[], Side::Forward, &OrbitSumParams::default()).unwrap();
        assert!((r.value - Complex64::new(-0.15, -0.05)).norm() < 1e-15);
        assert!(!r.truncated);
    }

    #[test]
    fn zero_mode_sign() {
        let theta = FourierMap::constant(2, 0, &[1.5]);
        let r = orbit_sum_coefficient(&theta, &cat().dual(), Complex64::new(2.0, 0.0), &[0, 0], &[], Side::Forward, &OrbitSumParams::default()).unwrap();
        assert!((r.value - Complex64::new(-1.5, 0.0)).norm() < 1e-15);
        let e = orbit_sum_coefficient(&theta, &cat().dual(), Complex64::new(1.0, 0.0), &[0, 0], &[], Side::Forward, &OrbitSumParams::default());
        assert_eq!(e, Err(Error::ZeroModeObstruction));
    }

    #[test]
    fn twist_spectrum_reconstructs() {
        let b = LatticeMatrix::from_rows(&[vec![1, 1], vec![1, 0]]).unwrap();
        let t = TwistSpectrum::new(&cat(), Some(&b));
        assert!(t.semisimple);
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(t.eigenvalues.clone()));
        let rec = &t.eigenbasis * lam * &t.eigenbasis_inverse;
        assert!((rec - cat().to_f64().map(|v| Complex64::new(v, 0.0))).norm() < 1e-10);
    }
}
