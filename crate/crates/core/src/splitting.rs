//! Commutator operators for pairs of perturbations and the splitting of a
//! near-cocycle into an exact part and a remainder.

use serde::Serialize;

use crate::cohomology::{difference, twisted_potential, untwisted_potential, EquationKind, OrbitSumParams, TwistSpectrum};
use crate::error::{Error, Result};
use crate::fourier::FourierMap;
use crate::lattice::{is_ergodic, LatticeMatrix};

/// `(f o B - B f) - (g o A - A g)`.
pub fn op_l1(f1: &FourierMap, g1: &FourierMap, a: &LatticeMatrix, b: &LatticeMatrix) -> FourierMap {
    difference(EquationKind::Twisted, f1, b).sub(&difference(EquationKind::Twisted, g1, a))
}

/// `(f o B - f) - (g o A - g)`.
pub fn op_l2(f2: &FourierMap, g2: &FourierMap, a: &LatticeMatrix, b: &LatticeMatrix) -> FourierMap {
    difference(EquationKind::Untwisted, f2, b).sub(&difference(EquationKind::Untwisted, g2, a))
}

/// Sup-majorants of the parts of a split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SplitDiagnostics {
    pub proj_f: f64,
    pub proj_g: f64,
    pub err_f: f64,
    pub err_g: f64,
    pub avg_f: f64,
    pub avg_g: f64,
    /// `L(projF, projG)` for the operator matching the split.
    pub proj_defect: f64,
}

/// `f = avg_f + proj_f + err_f` and likewise for `g`.
#[derive(Clone, Debug, Serialize)]
pub struct SplitResult {
    pub proj_f: FourierMap,
    pub proj_g: FourierMap,
    pub err_f: FourierMap,
    pub err_g: FourierMap,
    pub avg_f: FourierMap,
    pub avg_g: FourierMap,
    /// The potential whose differences give the projected parts.
    pub potential: FourierMap,
    pub warnings: Vec<String>,
    pub diagnostics: SplitDiagnostics,
}

fn check_pair(f: &FourierMap, g: &FourierMap, a: &LatticeMatrix, b: &LatticeMatrix) -> Result<()> {
    if f.base_dim() != a.dim() || g.base_dim() != a.dim() || b.dim() != a.dim() {
        return Err(Error::Dimension("split data and generators disagree on the base dimension".into()));
    }
    if f.fiber_dim() != g.fiber_dim() || f.target_dim() != g.target_dim() {
        return Err(Error::Dimension("split data have different shapes".into()));
    }
    if !a.commutes_with(b) {
        return Err(Error::NotCommuting);
    }
    if !is_ergodic(a) || !is_ergodic(b) {
        return Err(Error::NotErgodic);
    }
    Ok(())
}

fn assemble(
    kind: EquationKind,
    f: &FourierMap,
    g: &FourierMap,
    avg_f: FourierMap,
    avg_g: FourierMap,
    potential: FourierMap,
    a: &LatticeMatrix,
    b: &LatticeMatrix,
    warnings: Vec<String>,
) -> SplitResult {
    let proj_f = difference(kind, &potential, a);
    let proj_g = difference(kind, &potential, b);
    let err_f = f.sub(&avg_f).sub(&proj_f);
    let err_g = g.sub(&avg_g).sub(&proj_g);
    let proj_defect = match kind {
        EquationKind::Twisted => op_l1(&proj_f, &proj_g, a, b),
        EquationKind::Untwisted => op_l2(&proj_f, &proj_g, a, b),
    }
    .cr_majorant(0);
    let diagnostics = SplitDiagnostics {
        proj_f: proj_f.cr_majorant(0),
        proj_g: proj_g.cr_majorant(0),
        err_f: err_f.cr_majorant(0),
        err_g: err_g.cr_majorant(0),
        avg_f: avg_f.cr_majorant(0),
        avg_g: avg_g.cr_majorant(0),
        proj_defect,
    };
    SplitResult {
        proj_f,
        proj_g,
        err_f,
        err_g,
        avg_f,
        avg_g,
        potential,
        warnings,
        diagnostics,
    }
}

/// Split for twisted data (one component per base variable).
pub fn split_twisted(
    f1: &FourierMap,
    g1: &FourierMap,
    a: &LatticeMatrix,
    b: &LatticeMatrix,
    p: &OrbitSumParams,
) -> Result<SplitResult> {
    p.validate()?;
    check_pair(f1, g1, a, b)?;
    if f1.target_dim() != a.dim() {
        return Err(Error::Dimension("twisted data must have one component per base variable".into()));
    }
    let spec = TwistSpectrum::new(a, Some(b));
    let (omega, warnings) = twisted_potential(f1, &spec, p)?;
    let zero = FourierMap::zero(f1.base_dim(), f1.fiber_dim(), f1.target_dim());
    Ok(assemble(EquationKind::Twisted, f1, g1, zero.clone(), zero, omega, a, b, warnings))
}

/// Split for untwisted data after removing base averages.
pub fn split_untwisted(
    f2: &FourierMap,
    g2: &FourierMap,
    a: &LatticeMatrix,
    b: &LatticeMatrix,
    p: &OrbitSumParams,
) -> Result<SplitResult> {
    p.validate()?;
    check_pair(f2, g2, a, b)?;
    let (omega, warnings) = untwisted_potential(f2, a, p)?;
    Ok(assemble(
        EquationKind::Untwisted,
        f2,
        g2,
        f2.base_average(),
        g2.base_average(),
        omega,
        a,
        b,
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn pair() -> (LatticeMatrix, LatticeMatrix) {
        (
            LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap(),
            LatticeMatrix::from_rows(&[vec![-3, -2], vec![-2, -1]]).unwrap(),
        )
    }

    #[test]
    fn twisted_coboundaries_have_no_error_part() {
        let (a, b) = pair();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let u = FourierMap::random(2, 1, 2, 3, 0.4, false, &mut rng);
        let f = difference(EquationKind::Twisted, &u, &a);
        let g = difference(EquationKind::Twisted, &u, &b);
        let s = split_twisted(&f, &g, &a, &b, &OrbitSumParams::default()).unwrap();
        assert!(s.diagnostics.err_f < 1e-10 * f.cr_majorant(0), "{:?}", s.diagnostics);
        assert!(s.diagnostics.err_g < 1e-10 * g.cr_majorant(0), "{:?}", s.diagnostics);
    }

    #[test]
    fn untwisted_fiber_only_data_is_all_average() {
        let (a, b) = pair();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let f = FourierMap::random(0, 1, 1, 3, 0.4, true, &mut rng);
        let f = FourierMap::from_raw(2, 1, 1, f.iter().map(|(k, v)| ([vec![0, 0], k.clone()].concat(), v.clone())).collect());
        let s = split_untwisted(&f, &f, &a, &b, &OrbitSumParams::default()).unwrap();
        assert!(s.proj_f.is_zero() && s.err_f.is_zero());
        assert_eq!(s.avg_f, f);
    }
}
