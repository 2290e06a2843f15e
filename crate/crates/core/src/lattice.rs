//! Exact integer matrix algebra for toral automorphisms, the ergodicity
//! test, windowed higher-rank checks and the dominated splitting of a dual
//! automorphism.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// A unimodular `d x d` integer matrix, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct LatticeMatrix {
    dim: usize,
    entries: Vec<i64>,
}

impl fmt::Debug for LatticeMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows())
    }
}

impl TryFrom<Vec<Vec<i64>>> for LatticeMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<i64>>) -> Result<Self> {
        LatticeMatrix::from_rows(&rows)
    }
}

impl From<LatticeMatrix> for Vec<Vec<i64>> {
    fn from(m: LatticeMatrix) -> Self {
        m.rows()
    }
}

impl LatticeMatrix {
    /// Builds a matrix from row-major entries; fails unless `|det| = 1`.
    pub fn new(dim: usize, entries: Vec<i64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let m = LatticeMatrix { dim, entries };
        let det = m.det();
        if det.abs() != 1 {
            return Err(Error::NotUnimodular(det));
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {dim}",
                    r.len()
                )));
            }
        }
        LatticeMatrix::new(dim, rows.concat())
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        LatticeMatrix { dim, entries }
    }

    /// Block-diagonal sum of two unimodular matrices.
    pub fn block_diag(a: &LatticeMatrix, b: &LatticeMatrix) -> Self {
        let d = a.dim + b.dim;
        let mut entries = vec![0; d * d];
        for i in 0..a.dim {
            for j in 0..a.dim {
                entries[i * d + j] = a.get(i, j);
            }
        }
        for i in 0..b.dim {
            for j in 0..b.dim {
                entries[(a.dim + i) * d + a.dim + j] = b.get(i, j);
            }
        }
        LatticeMatrix { dim: d, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn is_identity(&self) -> bool {
        *self == LatticeMatrix::identity(self.dim)
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> i128 {
        det_i128(self.dim, self.entries.iter().map(|&v| v as i128).collect())
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.get(i, j);
            }
        }
        LatticeMatrix { dim: d, entries }
    }

    /// Product `self * other`; `None` on integer overflow.
    pub fn checked_mul(&self, other: &LatticeMatrix) -> Option<Self> {
        let d = self.dim;
        if other.dim != d {
            return None;
        }
        let mut entries = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc: i64 = 0;
                for k in 0..d {
                    acc = acc.checked_add(self.get(i, k).checked_mul(other.get(k, j))?)?;
                }
                entries[i * d + j] = acc;
            }
        }
        Some(LatticeMatrix { dim: d, entries })
    }

    /// Product that panics on overflow; for the small matrices used in practice.
    pub fn mul(&self, other: &LatticeMatrix) -> Self {
        self.checked_mul(other).expect("integer overflow in matrix product")
    }

    /// Exact inverse via the integer adjugate (valid since `det = +-1`).
    pub fn inverse(&self) -> Self {
        let d = self.dim;
        let det = self.det();
        if d == 1 {
            return LatticeMatrix {
                dim: 1,
                entries: vec![self.entries[0] * det as i64],
            };
        }
        let mut entries = vec![0i64; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut minor = Vec::with_capacity((d - 1) * (d - 1));
                for r in 0..d {
                    if r == j {
                        continue;
                    }
                    for c in 0..d {
                        if c == i {
                            continue;
                        }
                        minor.push(self.get(r, c) as i128);
                    }
                }
                let cof = det_i128(d - 1, minor);
                let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
                entries[i * d + j] = (sign * cof * det) as i64;
            }
        }
        LatticeMatrix { dim: d, entries }
    }

    /// The dual automorphism `(M^T)^{-1}`.
    pub fn dual(&self) -> Self {
        self.transpose().inverse()
    }

    /// Integer power, negative exponents through the exact inverse.
    pub fn checked_pow(&self, e: i64) -> Option<Self> {
        let base = if e < 0 { self.inverse() } else { self.clone() };
        let mut n = e.unsigned_abs();
        let mut acc = LatticeMatrix::identity(self.dim);
        let mut sq = base;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.checked_mul(&sq)?;
            }
            n >>= 1;
            if n > 0 {
                sq = sq.checked_mul(&sq)?;
            }
        }
        Some(acc)
    }

    pub fn pow(&self, e: i64) -> Self {
        self.checked_pow(e).expect("integer overflow in matrix power")
    }

    /// `M v` with overflow detection.
    pub fn apply(&self, v: &[i64]) -> Option<Vec<i64>> {
        let d = self.dim;
        let mut out = vec![0i64; d];
        for i in 0..d {
            let mut acc: i64 = 0;
            for k in 0..d {
                acc = acc.checked_add(self.get(i, k).checked_mul(v[k])?)?;
            }
            out[i] = acc;
        }
        Some(out)
    }

    /// `M^T v` with overflow detection.
    pub fn apply_transpose(&self, v: &[i64]) -> Option<Vec<i64>> {
        let d = self.dim;
        let mut out = vec![0i64; d];
        for i in 0..d {
            let mut acc: i64 = 0;
            for k in 0..d {
                acc = acc.checked_add(self.get(k, i).checked_mul(v[k])?)?;
            }
            out[i] = acc;
        }
        Some(out)
    }

    pub fn commutes_with(&self, other: &LatticeMatrix) -> bool {
        match (self.checked_mul(other), other.checked_mul(self)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> i64 {
        self.entries
            .chunks(self.dim)
            .map(|r| r.iter().map(|v| v.abs()).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            self.dim,
            self.dim,
            &self.entries.iter().map(|&v| v as f64).collect::<Vec<_>>(),
        )
    }

    /// Characteristic polynomial `det(xI - M)`, coefficients lowest degree first.
    ///
    /// Faddeev-LeVerrier recursion; every division is exact over the integers.
    pub fn charpoly(&self) -> Vec<i128> {
        let d = self.dim;
        let a: Vec<i128> = self.entries.iter().map(|&v| v as i128).collect();
        let mut c = vec![0i128; d + 1];
        c[d] = 1;
        let mut mk = vec![0i128; d * d];
        for k in 1..=d {
            // M_k = A M_{k-1} + c_{d-k+1} I
            let mut next = vec![0i128; d * d];
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0i128;
                    for l in 0..d {
                        acc += a[i * d + l] * mk[l * d + j];
                    }
                    next[i * d + j] = acc;
                }
                next[i * d + i] += c[d - k + 1];
            }
            mk = next;
            let mut tr = 0i128;
            for i in 0..d {
                for l in 0..d {
                    tr += a[i * d + l] * mk[l * d + i];
                }
            }
            c[d - k] = -tr / k as i128;
        }
        c
    }
}

fn det_i128(d: usize, mut m: Vec<i128>) -> i128 {
    if d == 0 {
        return 1;
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..d {
        if m[k * d + k] == 0 {
            let Some(p) = (k + 1..d).find(|&r| m[r * d + k] != 0) else {
                return 0;
            };
            for c in 0..d {
                m.swap(k * d + c, p * d + c);
            }
            sign = -sign;
        }
        let pivot = m[k * d + k];
        for i in k + 1..d {
            for j in k + 1..d {
                m[i * d + j] = (m[i * d + j] * pivot - m[i * d + k] * m[k * d + j]) / prev;
            }
            m[i * d + k] = 0;
        }
        prev = pivot;
    }
    sign * m[d * d - 1]
}

// ---------------------------------------------------------------------------
// Integer polynomials (lowest degree first).

fn poly_trim(p: &mut Vec<i128>) {
    while p.len() > 1 && *p.last().unwrap() == 0 {
        p.pop();
    }
}

/// Division by a monic polynomial; returns `(quotient, remainder)`.
fn poly_divrem_monic(num: &[i128], den: &[i128]) -> (Vec<i128>, Vec<i128>) {
    let mut r = num.to_vec();
    poly_trim(&mut r);
    let dd = den.len() - 1;
    if r.len() <= dd {
        return (vec![0], r);
    }
    let mut q = vec![0i128; r.len() - dd];
    for i in (0..q.len()).rev() {
        let coef = r[i + dd];
        q[i] = coef;
        if coef != 0 {
            for (j, &dj) in den.iter().enumerate() {
                r[i + j] -= coef * dj;
            }
        }
    }
    r.truncate(dd.max(1));
    poly_trim(&mut r);
    (q, r)
}

/// The `n`-th cyclotomic polynomial, by exact division of `x^n - 1`.
pub fn cyclotomic(n: usize) -> Vec<i128> {
    let mut p = vec![0i128; n + 1];
    p[0] = -1;
    p[n] = 1;
    for k in 1..n {
        if n % k == 0 {
            let (q, _) = poly_divrem_monic(&p, &cyclotomic(k));
            p = q;
        }
    }
    p
}

fn euler_phi(mut n: usize) -> usize {
    let mut result = n;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            while n % p == 0 {
                n /= p;
            }
            result -= result / p;
        }
        p += 1;
    }
    if n > 1 {
        result -= result / n;
    }
    result
}

/// Indices `n` whose cyclotomic polynomial has degree at most `d`.
pub fn cyclotomic_indices(d: usize) -> Vec<usize> {
    // phi(n) >= sqrt(n/2), so n <= 2 d^2 covers every candidate.
    (1..=2 * d * d + 2).filter(|&n| euler_phi(n) <= d).collect()
}

/// Cyclotomic factors of the characteristic polynomial, as indices `n` of `Phi_n`.
pub fn cyclotomic_factors(m: &LatticeMatrix) -> Vec<usize> {
    let p = m.charpoly();
    cyclotomic_indices(m.dim())
        .into_iter()
        .filter(|&n| {
            let (_, r) = poly_divrem_monic(&p, &cyclotomic(n));
            r.iter().all(|&c| c == 0)
        })
        .collect()
}

/// Exact ergodicity test: no eigenvalue is a root of unity.
///
/// The characteristic polynomial is monic with integer coefficients, so an
/// eigenvalue that is a primitive `n`-th root of unity forces the irreducible
/// factor `Phi_n`. Divisibility by each admissible `Phi_n` is tested with exact
/// integer division.
pub fn is_ergodic(m: &LatticeMatrix) -> bool {
    cyclotomic_factors(m).is_empty()
}

// ---------------------------------------------------------------------------
// Higher rank window.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowVerdict {
    PassOnWindow,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HigherRankReport {
    pub window: i64,
    pub failures: Vec<(i64, i64)>,
    pub kappa0_estimate: f64,
    pub verdict: WindowVerdict,
}

pub const DEFAULT_WINDOW: i64 = 10;

/// Checks ergodicity of every `A^l B^k` with `0 < max(|l|,|k|) <= L`.
pub fn higher_rank_window(a: &LatticeMatrix, b: &LatticeMatrix, window: i64) -> Result<HigherRankReport> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("generators have different dimensions".into()));
    }
    if window < 1 {
        return Err(Error::Invalid("window must be at least 1".into()));
    }
    if !a.commutes_with(b) {
        return Err(Error::NotCommuting);
    }
    let mut failures = Vec::new();
    for l in -window..=window {
        for k in -window..=window {
            if l == 0 && k == 0 {
                continue;
            }
            let ok = match a.checked_pow(l).and_then(|al| b.checked_pow(k).and_then(|bk| al.checked_mul(&bk))) {
                Some(m) => is_ergodic(&m),
                // Entries beyond i64 only occur for strongly expanding products,
                // which are never periodic; fall back to the float spectrum.
                None => float_ergodic(a, b, l, k),
            };
            if !ok {
                failures.push((l, k));
            }
        }
    }
    let kappa0_estimate = fit_kappa0(a, b, window);
    let verdict = if failures.is_empty() {
        WindowVerdict::PassOnWindow
    } else {
        WindowVerdict::Fail
    };
    Ok(HigherRankReport {
        window,
        failures,
        kappa0_estimate,
        verdict,
    })
}

fn float_ergodic(a: &LatticeMatrix, b: &LatticeMatrix, l: i64, k: i64) -> bool {
    let m = float_pow(&a.to_f64(), l) * float_pow(&b.to_f64(), k);
    m.complex_eigenvalues()
        .iter()
        .all(|z| (z.norm() - 1.0).abs() > 1e-6)
}

fn float_pow(m: &DMatrix<f64>, e: i64) -> DMatrix<f64> {
    let base = if e < 0 {
        m.clone().try_inverse().expect("unimodular matrix is invertible")
    } else {
        m.clone()
    };
    let mut acc = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..e.unsigned_abs() {
        acc = &acc * &base;
    }
    acc
}

/// Least-squares slope of `min_n ln ||(A*)^l (B*)^k n||` against the shell
/// radius `max(|l|,|k|)`, sampling the nonzero vectors of the unit cube.
fn fit_kappa0(a: &LatticeMatrix, b: &LatticeMatrix, window: i64) -> f64 {
    let d = a.dim();
    let ad = a.dual().to_f64();
    let bd = b.dual().to_f64();
    let samples: Vec<DVector<f64>> = cube_vectors(d, 1)
        .into_iter()
        .map(|v| DVector::from_iterator(d, v.into_iter().map(|x| x as f64)))
        .collect();
    let mut pts = Vec::new();
    for r in 1..=window {
        let mut best = f64::INFINITY;
        for l in -r..=r {
            for k in -r..=r {
                if l.abs().max(k.abs()) != r {
                    continue;
                }
                let m = float_pow(&ad, l) * float_pow(&bd, k);
                for v in &samples {
                    best = best.min((&m * v).norm().ln());
                }
            }
        }
        pts.push((r as f64, best));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Nonzero integer vectors with `||v||_inf <= radius`, in lexicographic order.
pub fn cube_vectors(d: usize, radius: i64) -> Vec<Vec<i64>> {
    let side = (2 * radius + 1) as usize;
    let total = side.pow(d as u32);
    let mut out = Vec::with_capacity(total.saturating_sub(1));
    for idx in 0..total {
        let mut v = vec![0i64; d];
        let mut rem = idx;
        for c in (0..d).rev() {
            v[c] = (rem % side) as i64 - radius;
            rem /= side;
        }
        if v.iter().any(|&x| x != 0) {
            out.push(v);
        }
    }
    out
}

/// A commuting candidate found by [`commuting_partner_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartnerCandidate {
    pub matrix: LatticeMatrix,
    pub failures: usize,
    pub norm_inf: i64,
}

/// Searches integer polynomials `c_0 I + c_1 A + ... + c_{d-1} A^{d-1}` with
/// entries bounded by `entry_bound` for ergodic unimodular partners of `A`
/// (the centralizer of a matrix with distinct eigenvalues consists of such
/// polynomials). Candidates are ranked by window failures, then by norm,
/// then lexicographically. `+-A` and `+-I` are excluded.
pub fn commuting_partner_search(a: &LatticeMatrix, entry_bound: i64, window: i64) -> Vec<PartnerCandidate> {
    let d = a.dim();
    let powers: Vec<LatticeMatrix> = (0..d as i64).map(|k| a.pow(k)).collect();
    let coeff_bound = entry_bound * 3 + 3;
    let side = (2 * coeff_bound + 1) as usize;
    let neg_a = LatticeMatrix {
        dim: d,
        entries: a.entries.iter().map(|v| -v).collect(),
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for idx in 0..side.pow(d as u32) {
        let mut rem = idx;
        let mut entries = vec![0i64; d * d];
        for p in powers.iter() {
            let c = (rem % side) as i64 - coeff_bound;
            rem /= side;
            for (e, v) in entries.iter_mut().zip(p.entries()) {
                *e += c * v;
            }
        }
        if entries.iter().any(|v| v.abs() > entry_bound) {
            continue;
        }
        let Ok(m) = LatticeMatrix::new(d, entries.clone()) else {
            continue;
        };
        if m == *a || m == neg_a || m.is_identity() || !is_ergodic(&m) || !seen.insert(entries) {
            continue;
        }
        let failures = higher_rank_window(a, &m, window)
            .map(|r| r.failures.len())
            .unwrap_or(usize::MAX);
        out.push(PartnerCandidate {
            norm_inf: m.norm_inf(),
            matrix: m,
            failures,
        });
    }
    out.sort_by(|x, y| {
        (x.failures, x.norm_inf, x.matrix.entries()).cmp(&(y.failures, y.norm_inf, y.matrix.entries()))
    });
    out
}

// ---------------------------------------------------------------------------
// Dominated splitting.

pub const DEFAULT_SPLIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    U,
    S,
    C,
}

/// Invariant splitting `R^d = E^u + E^c + E^s` of a matrix together with
/// the associated (oblique) projections.
#[derive(Clone, Debug)]
pub struct SpectralSplitting {
    pub source: LatticeMatrix,
    pub eigenvalues: Vec<Complex64>,
    pub unstable_basis: Vec<DVector<f64>>,
    pub center_basis: Vec<DVector<f64>>,
    pub stable_basis: Vec<DVector<f64>>,
    pub proj_u: DMatrix<f64>,
    pub proj_c: DMatrix<f64>,
    pub proj_s: DMatrix<f64>,
    /// Smallest modulus among unstable eigenvalues (1 when there are none).
    pub rho: f64,
    /// Fitted constant `C` in `||M^i v|| >= C rho^i ||v||` on `E^u`.
    pub c_estimate: f64,
    pub tolerance: f64,
    pub non_semisimple: bool,
}

/// Eigenvalues sorted by modulus, then argument, for reproducible order.
pub(crate) fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    let mut ev: Vec<Complex64> = m.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    ev
}

/// Orthonormal basis of the kernel of `prod (M - lambda I)` over a group of
/// eigenvalues (with multiplicity), i.e. the generalized eigenspace sum.
fn group_subspace(m: &DMatrix<f64>, group: &[Complex64]) -> Vec<DVector<f64>> {
    let d = m.nrows();
    if group.is_empty() {
        return Vec::new();
    }
    if group.len() == d {
        return (0..d).map(|i| DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 })).collect();
    }
    let mc = m.map(|v| Complex64::new(v, 0.0));
    let mut g = DMatrix::<Complex64>::identity(d, d);
    for &lam in group {
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * lam;
        g = shifted * g;
        // Keep the product well scaled; only its kernel matters.
        let s = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            g /= Complex64::new(s, 0.0);
        }
    }
    let gr = g.map(|z| z.re);
    let svd = gr.svd(false, true);
    let vt = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    order
        .into_iter()
        .take(group.len())
        .map(|i| vt.row(i).transpose())
        .collect()
}

fn is_semisimple(m: &DMatrix<f64>, ev: &[Complex64]) -> bool {
    let d = m.nrows();
    let mc = m.map(|v| Complex64::new(v, 0.0));
    let mut i = 0;
    while i < ev.len() {
        let mut j = i + 1;
        while j < ev.len() && (ev[j] - ev[i]).norm() < 1e-6 * (1.0 + ev[i].norm()) {
            j += 1;
        }
        let mult = j - i;
        if mult > 1 {
            let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * ev[i];
            let sv = shifted.singular_values();
            let scale = sv.iter().cloned().fold(1.0, f64::max);
            let nullity = sv.iter().filter(|&&s| s < 1e-7 * scale).count();
            if nullity < mult {
                return false;
            }
        }
        i = j;
    }
    true
}

pub fn spectral_splitting(m: &LatticeMatrix, tol: f64) -> SpectralSplitting {
    let d = m.dim();
    let mf = m.to_f64();
    let ev = sorted_eigenvalues(&mf);
    let (mut gu, mut gc, mut gs) = (Vec::new(), Vec::new(), Vec::new());
    for &z in &ev {
        let r = z.norm();
        if r > 1.0 + tol {
            gu.push(z);
        } else if r < 1.0 - tol {
            gs.push(z);
        } else {
            gc.push(z);
        }
    }
    let bu = group_subspace(&mf, &gu);
    let bc = group_subspace(&mf, &gc);
    let bs = group_subspace(&mf, &gs);
    let mut q = DMatrix::<f64>::zeros(d, d);
    for (c, v) in bu.iter().chain(bc.iter()).chain(bs.iter()).enumerate() {
        q.set_column(c, v);
    }
    let qi = q.clone().try_inverse().expect("invariant subspaces span R^d");
    let proj = |start: usize, len: usize| -> DMatrix<f64> {
        if len == 0 {
            return DMatrix::zeros(d, d);
        }
        q.columns(start, len) * qi.rows(start, len)
    };
    let proj_u = proj(0, bu.len());
    let proj_c = proj(bu.len(), bc.len());
    let proj_s = proj(bu.len() + bc.len(), bs.len());
    let rho = gu.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let rho = if rho.is_finite() { rho } else { 1.0 };
    let c_estimate = if bu.is_empty() {
        1.0
    } else {
        let mut basis = DMatrix::<f64>::zeros(d, bu.len());
        for (c, v) in bu.iter().enumerate() {
            basis.set_column(c, v);
        }
        let mut c_min = f64::INFINITY;
        let mut power = DMatrix::<f64>::identity(d, d);
        for i in 0..=20 {
            let img = &power * &basis;
            let smin = img.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
            c_min = c_min.min(smin / rho.powi(i));
            power = &mf * power;
        }
        c_min
    };
    SpectralSplitting {
        source: m.clone(),
        non_semisimple: !is_semisimple(&mf, &ev),
        eigenvalues: ev,
        unstable_basis: bu,
        center_basis: bc,
        stable_basis: bs,
        proj_u,
        proj_c,
        proj_s,
        rho,
        c_estimate,
        tolerance: tol,
    }
}

impl SpectralSplitting {
    pub fn projection(&self, class: Class) -> &DMatrix<f64> {
        match class {
            Class::U => &self.proj_u,
            Class::S => &self.proj_s,
            Class::C => &self.proj_c,
        }
    }

    /// Norms `(||pi_u n||, ||pi_s n||, ||pi_c n||)`.
    pub fn projection_norms(&self, n: &[i64]) -> [f64; 3] {
        let v = DVector::from_iterator(n.len(), n.iter().map(|&x| x as f64));
        [
            (&self.proj_u * &v).norm(),
            (&self.proj_s * &v).norm(),
            (&self.proj_c * &v).norm(),
        ]
    }
}

/// Dominant subspace of a nonzero frequency; ties resolved as U > S > C.
pub fn classify_mostly_in(n: &[i64], s: &SpectralSplitting) -> Result<Class> {
    if n.iter().all(|&x| x == 0) {
        return Err(Error::ZeroFrequency);
    }
    let [u, st, c] = s.projection_norms(n);
    let scale = n.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let eps = 1e-12 * scale;
    let best = u.max(st).max(c);
    Ok(if u >= best - eps {
        Class::U
    } else if st >= best - eps {
        Class::S
    } else {
        Class::C
    })
}

/// Empirical `min ||pi_u n|| * ||n||^d` over `0 < ||n||_inf <= radius`.
pub fn katznelson_gamma_estimate(s: &SpectralSplitting, radius: i64) -> Result<f64> {
    if s.unstable_basis.is_empty() {
        return Err(Error::NoExpandingDirections);
    }
    let d = s.source.dim();
    let mut best = f64::INFINITY;
    for n in cube_vectors(d, radius) {
        let v = DVector::from_iterator(d, n.iter().map(|&x| x as f64));
        let val = (&s.proj_u * &v).norm() * v.norm().powi(d as i32);
        best = best.min(val);
    }
    Ok(best)
}
