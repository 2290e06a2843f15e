//! Skew maps `z -> T_{A,theta} z + f(z)` on `T^d x T^s`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::compose::{compose_with_map, invert_near_identity, CompositionParams};
use crate::error::{Error, Result};
use crate::fourier::FourierMap;
use crate::lattice::LatticeMatrix;
use crate::rational::{vec_add, vec_fract, Rational};

/// `F(x, y) = (A x, y + theta) + f(x, y)` with `f` periodic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewMap {
    pub a: LatticeMatrix,
    pub theta: Vec<Rational>,
    pub pert: FourierMap,
}

/// Output of an operation built from grid compositions.
#[derive(Clone, Debug)]
pub struct Budgeted<T> {
    pub value: T,
    pub budget: f64,
}

impl SkewMap {
    pub fn new(a: LatticeMatrix, theta: Vec<Rational>, pert: FourierMap) -> Result<Self> {
        let d = a.dim();
        if pert.base_dim() != d || pert.fiber_dim() != theta.len() || pert.target_dim() != d + theta.len() {
            return Err(Error::Dimension(format!(
                "perturbation of shape ({}, {}, {}) does not fit a skew map on T^{} x T^{}",
                pert.base_dim(),
                pert.fiber_dim(),
                pert.target_dim(),
                d,
                theta.len()
            )));
        }
        Ok(SkewMap {
            a,
            theta: vec_fract(&theta),
            pert,
        })
    }

    /// The unperturbed map `T_{A,theta}`.
    pub fn model(a: LatticeMatrix, theta: Vec<Rational>) -> Self {
        let (d, s) = (a.dim(), theta.len());
        SkewMap {
            a,
            theta: vec_fract(&theta),
            pert: FourierMap::zero(d, s, d + s),
        }
    }

    /// `id + h` for a displacement `h` with `d + s` components.
    pub fn near_identity(h: FourierMap) -> Self {
        let (d, s) = (h.base_dim(), h.fiber_dim());
        SkewMap {
            a: LatticeMatrix::identity(d),
            theta: vec![Rational::ZERO; s],
            pert: h,
        }
    }

    /// A map of the fiber torus alone, `y -> y + theta + f(y)`.
    pub fn fiber(theta: Vec<Rational>, pert: FourierMap) -> Result<Self> {
        if pert.base_dim() != 0 {
            return Err(Error::Dimension("fiber maps have no base variables".into()));
        }
        SkewMap::new(LatticeMatrix::identity(0), theta, pert)
    }

    pub fn base_dim(&self) -> usize {
        self.a.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.theta.len()
    }

    /// `L = diag(A, I_s)` as a real matrix.
    pub fn linear_part(&self) -> DMatrix<f64> {
        linear_part(&self.a, self.fiber_dim(), false)
    }

    /// Whether this map is the model `T_{A,theta}` with zero perturbation.
    pub fn is_model(&self) -> bool {
        self.pert.is_zero()
    }

    /// Point evaluation, not reduced modulo 1.
    pub fn evaluate(&self, z: &[f64]) -> Vec<f64> {
        let d = self.base_dim();
        let (x, y) = z.split_at(d);
        let f = self.pert.evaluate(x, y);
        let mut out = Vec::with_capacity(z.len());
        for i in 0..d {
            out.push((0..d).map(|j| self.a.get(i, j) as f64 * x[j]).sum::<f64>() + f[i]);
        }
        for (i, t) in self.theta.iter().enumerate() {
            out.push(y[i] + t.to_f64() + f[d + i]);
        }
        out
    }

    /// `f(T z)` for a function `f` on the same torus.
    pub fn pullback_model(&self, f: &FourierMap) -> FourierMap {
        f.pullback_skew(&self.a, &self.theta)
    }

    /// `self o other`.
    pub fn compose(&self, other: &SkewMap, p: &CompositionParams) -> Result<Budgeted<SkewMap>> {
        if self.base_dim() != other.base_dim() || self.fiber_dim() != other.fiber_dim() {
            return Err(Error::Dimension("composed maps live on different tori".into()));
        }
        let s = self.fiber_dim();
        let a = self.a.mul(&other.a);
        let theta = vec_fract(&vec_add(&self.theta, &other.theta));
        let lg = other.pert.apply_matrix(&self.linear_part());
        let shifted = self.pullback_model_with(&other.a, &other.theta);
        let displacement = other.pert.apply_matrix(&linear_part(&other.a, s, true));
        let c = compose_with_map(&shifted, &displacement, p)?;
        Ok(Budgeted {
            value: SkewMap {
                a,
                theta,
                pert: lg.add(&c.map),
            },
            budget: c.budget,
        })
    }

    fn pullback_model_with(&self, a: &LatticeMatrix, theta: &[Rational]) -> FourierMap {
        self.pert.pullback_skew(a, theta)
    }

    /// The inverse map `(id + v) o T^{-1}` with `v` the inverse displacement
    /// of `L^{-1} f`.
    pub fn inverse(&self, p: &CompositionParams) -> Result<Budgeted<SkewMap>> {
        let s = self.fiber_dim();
        let u = self.pert.apply_matrix(&linear_part(&self.a, s, true));
        let inv = invert_near_identity(&u, p)?;
        let a_inv = self.a.inverse();
        let theta_inv: Vec<Rational> = self.theta.iter().map(|t| t.neg()).collect();
        let pert = inv.map.pullback_skew(&a_inv, &theta_inv);
        Ok(Budgeted {
            value: SkewMap {
                a: a_inv,
                theta: vec_fract(&theta_inv),
                pert,
            },
            budget: inv.budget,
        })
    }

    /// `H^{-1} o self o H` for `H = id + h`, given `g` with `H^{-1} = id + g`.
    pub fn conjugate(&self, h: &FourierMap, g: &FourierMap, p: &CompositionParams) -> Result<Budgeted<SkewMap>> {
        let fh = self.compose(&SkewMap::near_identity(h.clone()), p)?;
        let out = SkewMap::near_identity(g.clone()).compose(&fh.value, p)?;
        Ok(Budgeted {
            value: out.value,
            budget: fh.budget + out.budget,
        })
    }

    /// `self^n` for `n >= 1`.
    pub fn power(&self, n: u32, p: &CompositionParams) -> Result<Budgeted<SkewMap>> {
        assert!(n >= 1);
        let mut acc = self.clone();
        let mut budget = 0.0;
        for _ in 1..n {
            let next = self.compose(&acc, p)?;
            budget += next.budget;
            acc = next.value;
        }
        Ok(Budgeted { value: acc, budget })
    }

    /// Sup-majorant of the difference of perturbations; infinite when the
    /// linear parts or translations differ.
    pub fn distance(&self, other: &SkewMap) -> f64 {
        if self.a != other.a || vec_fract(&self.theta) != vec_fract(&other.theta) {
            return f64::INFINITY;
        }
        self.pert.sub(&other.pert).cr_majorant(0)
    }
}

/// `diag(A, I_s)` or its inverse.
pub fn linear_part(a: &LatticeMatrix, s: usize, inverse: bool) -> DMatrix<f64> {
    let d = a.dim();
    let m = if inverse { a.inverse() } else { a.clone() };
    let mut out = DMatrix::<f64>::identity(d + s, d + s);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = m.get(i, j) as f64;
        }
    }
    out
}

/// Sup-majorant of `F o G - G o F`.
pub fn commutation_defect(f: &SkewMap, g: &SkewMap, p: &CompositionParams) -> Result<f64> {
    if !f.a.commutes_with(&g.a) {
        return Err(Error::NotCommuting);
    }
    let fg = f.compose(g, p)?;
    let gf = g.compose(f, p)?;
    Ok(fg.value.distance(&gf.value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn cat() -> LatticeMatrix {
        LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    fn small_map(seed: u64, amp: f64) -> SkewMap {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let f = FourierMap::random(2, 1, 3, 2, 0.5, true, &mut rng);
        let f = f.scale(amp / f.cr_majorant(1));
        SkewMap::new(cat(), vec![Rational::new(1, 3).unwrap()], f).unwrap()
    }

    #[test]
    fn composition_matches_pointwise() {
        let p = CompositionParams::default();
        let f = small_map(1, 0.01);
        let g = small_map(2, 0.02);
        let fg = f.compose(&g, &p).unwrap().value;
        for i in 0..10 {
            let z = [0.1 * i as f64, 0.27 * i as f64 % 1.0, 0.61 * i as f64 % 1.0];
            let want = f.evaluate(&g.evaluate(&z));
            let got = fg.evaluate(&z);
            for (a, b) in want.iter().zip(&got) {
                let diff = a - b;
                assert!((diff - diff.round()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = CompositionParams::default();
        let f = small_map(3, 0.01);
        let fi = f.inverse(&p).unwrap().value;
        let id = f.compose(&fi, &p).unwrap().value;
        assert!(id.a.is_identity());
        assert!(id.pert.cr_majorant(0) < 1e-14);
    }
}
