//! Sparse Fourier maps on `T^d x T^s` with values in `R^k`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rustfft::FftDirection;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{fft_nd, wrap_index};
use crate::lattice::LatticeMatrix;
use crate::rational::Rational;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Frequency key: base frequency `n` followed by fiber frequency `m`.
pub type Freq = Vec<i64>;

/// A finitely supported vector-valued Fourier series on `T^d x T^s`.
///
/// Both members of each `+-k` pair are stored. Public constructors keep the
/// reality condition `c(-k) = conj(c(k))`; a few crate-internal routines use
/// the same container for complex-valued intermediate data.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMap {
    base_dim: usize,
    fiber_dim: usize,
    target_dim: usize,
    coeffs: BTreeMap<Freq, Vec<Complex64>>,
}

/// First nonzero entry positive.
pub(crate) fn is_positive(k: &[i64]) -> bool {
    k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

pub(crate) fn negate(k: &[i64]) -> Freq {
    k.iter().map(|v| -v).collect()
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn freq_norm(k: &[i64]) -> f64 {
    k.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt()
}

impl FourierMap {
    pub fn zero(base_dim: usize, fiber_dim: usize, target_dim: usize) -> Self {
        FourierMap {
            base_dim,
            fiber_dim,
            target_dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// The constant map with value `c`.
    pub fn constant(base_dim: usize, fiber_dim: usize, c: &[f64]) -> Self {
        let mut f = FourierMap::zero(base_dim, fiber_dim, c.len());
        f.set(&vec![0; base_dim + fiber_dim], c.iter().map(|&v| Complex64::new(v, 0.0)).collect());
        f
    }

    /// Builds a real map from coefficients on one side of each `+-k` pair.
    ///
    /// Entries may be given for either member of a pair (not both); the
    /// conjugate mirror is filled in. The zero frequency keeps its real part.
    pub fn from_half(
        base_dim: usize,
        fiber_dim: usize,
        target_dim: usize,
        entries: impl IntoIterator<Item = (Freq, Vec<Complex64>)>,
    ) -> Result<Self> {
        let mut f = FourierMap::zero(base_dim, fiber_dim, target_dim);
        for (k, v) in entries {
            if k.len() != base_dim + fiber_dim {
                return Err(Error::Dimension(format!(
                    "frequency {k:?} has {} entries, expected {}",
                    k.len(),
                    base_dim + fiber_dim
                )));
            }
            if v.len() != target_dim {
                return Err(Error::Dimension(format!(
                    "coefficient at {k:?} has {} components, expected {target_dim}",
                    v.len()
                )));
            }
            f.insert_pair(k, v);
        }
        Ok(f)
    }

    /// Sets `c(k) = v` and `c(-k) = conj(v)`.
    pub fn insert_pair(&mut self, k: Freq, v: Vec<Complex64>) {
        if k.iter().all(|&x| x == 0) {
            self.set(&k, v.iter().map(|z| Complex64::new(z.re, 0.0)).collect());
        } else {
            let mirror = negate(&k);
            self.set(&mirror, v.iter().map(|z| z.conj()).collect());
            self.set(&k, v);
        }
    }

    /// Raw assignment without mirroring; zero vectors are removed.
    pub(crate) fn set(&mut self, k: &[i64], v: Vec<Complex64>) {
        if v.iter().all(|z| *z == ZERO) {
            self.coeffs.remove(k);
        } else {
            self.coeffs.insert(k.to_vec(), v);
        }
    }

    pub(crate) fn add_at(&mut self, k: &[i64], v: &[Complex64]) {
        match self.coeffs.get_mut(k) {
            Some(c) => {
                for (a, b) in c.iter_mut().zip(v) {
                    *a += b;
                }
                if c.iter().all(|z| *z == ZERO) {
                    self.coeffs.remove(k);
                }
            }
            None => self.set(k, v.to_vec()),
        }
    }

    pub(crate) fn from_raw(
        base_dim: usize,
        fiber_dim: usize,
        target_dim: usize,
        coeffs: BTreeMap<Freq, Vec<Complex64>>,
    ) -> Self {
        let mut f = FourierMap::zero(base_dim, fiber_dim, target_dim);
        for (k, v) in coeffs {
            f.set(&k, v);
        }
        f
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }
    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }
    pub fn target_dim(&self) -> usize {
        self.target_dim
    }
    /// Number of torus variables `d + s`.
    pub fn dim(&self) -> usize {
        self.base_dim + self.fiber_dim
    }
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn get(&self, k: &[i64]) -> Option<&Vec<Complex64>> {
        self.coeffs.get(k)
    }
    pub fn iter(&self) -> impl Iterator<Item = (&Freq, &Vec<Complex64>)> {
        self.coeffs.iter()
    }

    /// Coefficient at `k`, zero when absent.
    pub fn coeff(&self, k: &[i64]) -> Vec<Complex64> {
        self.coeffs.get(k).cloned().unwrap_or_else(|| vec![ZERO; self.target_dim])
    }

    /// Largest sup-norm of a supported frequency.
    pub fn bandwidth(&self) -> i64 {
        self.coeffs
            .keys()
            .map(|k| k.iter().map(|v| v.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// Largest `|k_a|` over the support, per torus axis.
    pub fn axis_bandwidths(&self) -> Vec<i64> {
        let mut bw = vec![0; self.dim()];
        for k in self.coeffs.keys() {
            for (b, v) in bw.iter_mut().zip(k) {
                *b = (*b).max(v.abs());
            }
        }
        bw
    }

    fn check_same_shape(&self, other: &FourierMap) {
        assert!(
            self.base_dim == other.base_dim
                && self.fiber_dim == other.fiber_dim
                && self.target_dim == other.target_dim,
            "shape mismatch: ({}, {}, {}) vs ({}, {}, {})",
            self.base_dim,
            self.fiber_dim,
            self.target_dim,
            other.base_dim,
            other.fiber_dim,
            other.target_dim
        );
    }

    pub fn add(&self, other: &FourierMap) -> FourierMap {
        self.check_same_shape(other);
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            out.add_at(k, v);
        }
        out
    }

    pub fn sub(&self, other: &FourierMap) -> FourierMap {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> FourierMap {
        let mut out = FourierMap::zero(self.base_dim, self.fiber_dim, self.target_dim);
        if c != 0.0 {
            for (k, v) in &self.coeffs {
                out.set(k, v.iter().map(|z| z * c).collect());
            }
        }
        out
    }

    /// Applies a real `k' x k` matrix to every coefficient vector.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> FourierMap {
        assert_eq!(m.ncols(), self.target_dim);
        let mut out = FourierMap::zero(self.base_dim, self.fiber_dim, m.nrows());
        for (k, v) in &self.coeffs {
            let w: Vec<Complex64> = (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| v[j] * m[(i, j)]).sum())
                .collect();
            out.set(k, w);
        }
        out
    }

    /// Applies a complex matrix to every coefficient vector (crate-internal,
    /// the result is in general not real).
    pub(crate) fn apply_complex_matrix(&self, m: &DMatrix<Complex64>) -> FourierMap {
        let mut out = FourierMap::zero(self.base_dim, self.fiber_dim, m.nrows());
        for (k, v) in &self.coeffs {
            let w: Vec<Complex64> = (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| v[j] * m[(i, j)]).sum())
                .collect();
            out.set(k, w);
        }
        out
    }

    /// Components `start..start+len` as a new map.
    pub fn components(&self, start: usize, len: usize) -> FourierMap {
        let mut out = FourierMap::zero(self.base_dim, self.fiber_dim, len);
        for (k, v) in &self.coeffs {
            out.set(k, v[start..start + len].to_vec());
        }
        out
    }

    pub fn component(&self, j: usize) -> FourierMap {
        self.components(j, 1)
    }

    /// Stacks the components of several maps on the same torus.
    pub fn stack(parts: &[&FourierMap]) -> FourierMap {
        let (d, s) = (parts[0].base_dim, parts[0].fiber_dim);
        let k: usize = parts.iter().map(|p| p.target_dim).sum();
        let mut out = FourierMap::zero(d, s, k);
        let mut offset = 0;
        for p in parts {
            assert!(p.base_dim == d && p.fiber_dim == s);
            for (key, v) in &p.coeffs {
                let mut w = out.coeff(key);
                w[offset..offset + p.target_dim].copy_from_slice(v);
                out.set(key, w);
            }
            offset += p.target_dim;
        }
        out
    }

    /// Value at a point; the imaginary part vanishes by the reality condition.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.base_dim);
        assert_eq!(y.len(), self.fiber_dim);
        let mut acc = vec![0.0; self.target_dim];
        for (k, v) in &self.coeffs {
            let phase: f64 = k[..self.base_dim].iter().zip(x).map(|(&a, b)| a as f64 * b).sum::<f64>()
                + k[self.base_dim..].iter().zip(y).map(|(&a, b)| a as f64 * b).sum::<f64>();
            let e = Complex64::from_polar(1.0, 2.0 * PI * phase);
            for (a, c) in acc.iter_mut().zip(v) {
                *a += (c * e).re;
            }
        }
        acc
    }

    /// `f(Mx, y)`: the coefficient at `n` moves to `M^T n`.
    pub fn pullback(&self, m: &LatticeMatrix) -> FourierMap {
        self.pullback_skew(m, &vec![Rational::ZERO; self.fiber_dim])
    }

    /// `f(Mx, y + theta)`.
    pub fn pullback_skew(&self, m: &LatticeMatrix, theta: &[Rational]) -> FourierMap {
        assert_eq!(m.dim(), self.base_dim);
        assert_eq!(theta.len(), self.fiber_dim);
        let d = self.base_dim;
        let trivial_shift = theta.iter().all(|t| t.fract() == Rational::ZERO);
        let mut out = FourierMap::zero(self.base_dim, self.fiber_dim, self.target_dim);
        for (k, v) in &self.coeffs {
            let mut key = m.apply_transpose(&k[..d]).expect("frequency overflow in pullback");
            key.extend_from_slice(&k[d..]);
            let w = if trivial_shift {
                v.clone()
            } else {
                let e = fiber_phase(&k[d..], theta);
                v.iter().map(|c| c * e).collect()
            };
            out.coeffs.insert(key, w);
        }
        out
    }

    /// Weighted coefficient sum `sum (1 + 2 pi |k|)^r |c(k)|`.
    pub fn cr_majorant(&self, r: u32) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| (1.0 + 2.0 * PI * freq_norm(k)).powi(r as i32) * vec_norm(v))
            .fold(0.0, |a, b| a + b)
    }

    /// Same weights with a real exponent (used for large diagnostic orders).
    pub fn cr_majorant_real(&self, r: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| (1.0 + 2.0 * PI * freq_norm(k)).powf(r) * vec_norm(v))
            .fold(0.0, |a, b| a + b)
    }

    /// Largest coefficient-wise distance `max_k |c(k) - c'(k)|`.
    pub fn max_coeff_diff(&self, other: &FourierMap) -> f64 {
        self.check_same_shape(other);
        let mut best: f64 = 0.0;
        for (k, v) in &self.coeffs {
            let w = other.coeff(k);
            let d: Vec<Complex64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
            best = best.max(vec_norm(&d));
        }
        for (k, w) in &other.coeffs {
            if !self.coeffs.contains_key(k) {
                best = best.max(vec_norm(w));
            }
        }
        best
    }

    /// Largest coefficient norm.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.values().map(|v| vec_norm(v)).fold(0.0, f64::max)
    }

    /// `(S_N f, R_N f)` with `S_N + R_N = id` coefficient-wise.
    pub fn smooth_truncate(&self, p: &SmoothingParams) -> (FourierMap, FourierMap) {
        let mut s = FourierMap::zero(self.base_dim, self.fiber_dim, self.target_dim);
        let mut r = s.clone();
        for (k, v) in &self.coeffs {
            let w = p.weight(freq_norm(k));
            if w == 1.0 {
                s.coeffs.insert(k.clone(), v.clone());
            } else if w == 0.0 {
                r.coeffs.insert(k.clone(), v.clone());
            } else {
                let sv: Vec<Complex64> = v.iter().map(|c| c * w).collect();
                let rv: Vec<Complex64> = v.iter().zip(&sv).map(|(c, a)| c - a).collect();
                s.set(k, sv);
                r.set(k, rv);
            }
        }
        (s, r)
    }

    /// The average over the base variables: only `n = 0` coefficients kept.
    pub fn base_average(&self) -> FourierMap {
        let d = self.base_dim;
        FourierMap {
            base_dim: self.base_dim,
            fiber_dim: self.fiber_dim,
            target_dim: self.target_dim,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k[..d].iter().all(|&v| v == 0))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// `f - base_average(f)`.
    pub fn without_base_average(&self) -> FourierMap {
        let d = self.base_dim;
        FourierMap {
            base_dim: self.base_dim,
            fiber_dim: self.fiber_dim,
            target_dim: self.target_dim,
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k[..d].iter().any(|&v| v != 0))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Removes coefficients with norm below `tol`; returns the removed mass.
    pub fn prune(&mut self, tol: f64) -> f64 {
        let mut dropped = 0.0;
        self.coeffs.retain(|_, v| {
            let n = vec_norm(v);
            if n < tol {
                dropped += n;
                false
            } else {
                true
            }
        });
        dropped
    }

    /// Enforces the reality condition by averaging each pair with its mirror.
    pub fn symmetrize(&mut self) {
        let keys: Vec<Freq> = self.coeffs.keys().cloned().collect();
        let mut out = BTreeMap::new();
        for k in keys {
            let mk = negate(&k);
            if !is_positive(&k) && k != mk {
                if self.coeffs.contains_key(&mk) {
                    continue;
                }
            }
            let a = self.coeff(&k);
            let b = self.coeff(&mk);
            let v: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| (x + y.conj()) * 0.5).collect();
            if k == mk {
                out.insert(k, v.iter().map(|z| Complex64::new(z.re, 0.0)).collect::<Vec<_>>());
            } else {
                out.insert(mk, v.iter().map(|z| z.conj()).collect::<Vec<_>>());
                out.insert(k, v);
            }
        }
        *self = FourierMap::from_raw(self.base_dim, self.fiber_dim, self.target_dim, out);
    }

    /// Largest violation of `c(-k) = conj(c(k))`.
    pub fn reality_defect(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(k, v)| {
                let w = self.coeff(&negate(k));
                v.iter().zip(&w).map(|(a, b)| (a - b.conj()).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Same function viewed on `T^d x T^{s'}` with `s' >= s`, constant in
    /// the new fiber variables.
    pub fn with_fiber_dim(&self, fiber_dim: usize) -> FourierMap {
        assert!(fiber_dim >= self.fiber_dim);
        let extra = fiber_dim - self.fiber_dim;
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, v)| {
                let mut key = k.clone();
                key.extend(std::iter::repeat(0).take(extra));
                (key, v.clone())
            })
            .collect();
        FourierMap::from_raw(self.base_dim, fiber_dim, self.target_dim, coeffs)
    }

    /// Restriction to the fiber torus of the `n = 0` part.
    pub fn fiber_part(&self) -> FourierMap {
        let d = self.base_dim;
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| k[..d].iter().all(|&v| v == 0))
            .map(|(k, v)| (k[d..].to_vec(), v.clone()))
            .collect();
        FourierMap::from_raw(0, self.fiber_dim, self.target_dim, coeffs)
    }

    /// Seeded random real map with coefficients decaying like `e^{-decay |k|}`
    /// on the cube `|k|_inf <= bandwidth` (base and fiber alike).
    pub fn random<R: Rng>(
        base_dim: usize,
        fiber_dim: usize,
        target_dim: usize,
        bandwidth: i64,
        decay: f64,
        include_zero: bool,
        rng: &mut R,
    ) -> FourierMap {
        let dim = base_dim + fiber_dim;
        let mut f = FourierMap::zero(base_dim, fiber_dim, target_dim);
        let mut keys = crate::lattice::cube_vectors(dim, bandwidth);
        if include_zero {
            keys.push(vec![0; dim]);
        }
        keys.sort();
        for k in keys {
            if !(is_positive(&k) || k.iter().all(|&v| v == 0)) {
                continue;
            }
            let w = (-decay * freq_norm(&k)).exp();
            let v: Vec<Complex64> = (0..target_dim)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * w)
                .collect();
            f.insert_pair(k, v);
        }
        f
    }
}

/// Seeded random real map with a prescribed C^1 majorant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub seed: u64,
    pub amplitude: f64,
    pub bandwidth: i64,
}

/// Decay rate of the coefficients drawn by [`RandomSpec::sample`].
pub const RANDOM_DECAY: f64 = 0.5;

impl RandomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::Invalid(format!("amplitude must be finite and non-negative, got {}", self.amplitude)));
        }
        if self.bandwidth < 1 {
            return Err(Error::Invalid(format!("bandwidth must be at least 1, got {}", self.bandwidth)));
        }
        Ok(())
    }

    /// Draws coefficients from ChaCha20 seeded with `seed` and rescales the
    /// map so that its C^1 majorant is `0.999 * amplitude`.
    pub fn sample(&self, base_dim: usize, fiber_dim: usize, target_dim: usize, include_zero: bool) -> FourierMap {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(self.seed);
        let raw = FourierMap::random(base_dim, fiber_dim, target_dim, self.bandwidth, RANDOM_DECAY, include_zero, &mut rng);
        if self.amplitude == 0.0 || raw.is_zero() {
            return FourierMap::zero(base_dim, fiber_dim, target_dim);
        }
        raw.scale(0.999 * self.amplitude / raw.cr_majorant(1))
    }
}

pub(crate) fn fiber_phase(m: &[i64], theta: &[Rational]) -> Complex64 {
    // Exact reduction of m.theta mod 1 before taking the exponential.
    let mut acc = Rational::ZERO;
    for (&mi, t) in m.iter().zip(theta) {
        acc = acc.add(&t.mul_int(mi)).fract();
    }
    Complex64::from_polar(1.0, 2.0 * PI * acc.to_f64())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Sharp,
    Smooth,
}

/// Radial coefficient cutoff `S_N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub cutoff: f64,
    pub profile: Profile,
}

impl SmoothingParams {
    pub fn new(cutoff: f64, profile: Profile) -> Result<Self> {
        if !(cutoff > 0.0) {
            return Err(Error::Invalid(format!("cutoff must be positive, got {cutoff}")));
        }
        Ok(SmoothingParams { cutoff, profile })
    }

    /// The multiplier `chi(|k| / N)`.
    pub fn weight(&self, norm: f64) -> f64 {
        let t = norm / self.cutoff;
        match self.profile {
            Profile::Sharp => {
                if t <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Smooth => bump(t),
        }
    }
}

/// `C^infinity` step: 1 on `[0, 1/2]`, 0 on `[1, inf)`, monotone between.
pub fn bump(t: f64) -> f64 {
    fn psi(u: f64) -> f64 {
        if u <= 0.0 {
            0.0
        } else {
            (-1.0 / u).exp()
        }
    }
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = psi(1.0 - t);
        let b = psi(t - 0.5);
        a / (a + b)
    }
}

// ---------------------------------------------------------------------------
// Grid transforms.

/// Real samples of each component on a uniform product grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSamples {
    pub shape: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl GridSamples {
    /// Coordinates of the flat grid index `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.shape.len()];
        let mut rem = idx;
        for a in (0..self.shape.len()).rev() {
            p[a] = (rem % self.shape[a]) as f64 / self.shape[a] as f64;
            rem /= self.shape[a];
        }
        p
    }
}

pub(crate) fn check_grid(f: &FourierMap, shape: &[usize]) -> Result<()> {
    if shape.len() != f.dim() {
        return Err(Error::Dimension(format!(
            "grid has {} axes, map lives on a {}-torus",
            shape.len(),
            f.dim()
        )));
    }
    for (a, (&n, &b)) in shape.iter().zip(&f.axis_bandwidths()).enumerate() {
        if (n as i64) < 2 * b + 1 {
            return Err(Error::Aliasing {
                axis: a,
                grid: n,
                bandwidth: b,
            });
        }
    }
    Ok(())
}

/// Fills a spectrum buffer with components `j` and `j+1` packed as `c_j + i c_{j+1}`
/// (after multiplying by `weight(k)`).
pub(crate) fn pack_spectrum(
    f: &FourierMap,
    j: usize,
    shape: &[usize],
    buf: &mut [Complex64],
    weight: impl Fn(&[i64]) -> Complex64,
) {
    buf.iter_mut().for_each(|z| *z = ZERO);
    let pair = j + 1 < f.target_dim();
    for (k, v) in f.iter() {
        let w = weight(k);
        let mut z = v[j];
        if pair {
            z += Complex64::new(0.0, 1.0) * v[j + 1];
        }
        buf[wrap_index(k, shape)] += z * w;
    }
}

/// Samples all components; the map must be resolvable on the grid.
pub fn grid_transform(f: &FourierMap, shape: &[usize]) -> Result<GridSamples> {
    check_grid(f, shape)?;
    let total: usize = shape.iter().product();
    let mut values = Vec::with_capacity(f.target_dim());
    let mut buf = vec![ZERO; total];
    let mut j = 0;
    while j < f.target_dim() {
        pack_spectrum(f, j, shape, &mut buf, |_| Complex64::new(1.0, 0.0));
        fft_nd(&mut buf, shape, FftDirection::Inverse);
        values.push(buf.iter().map(|z| z.re).collect());
        if j + 1 < f.target_dim() {
            values.push(buf.iter().map(|z| z.im).collect());
        }
        j += 2;
    }
    Ok(GridSamples {
        shape: shape.to_vec(),
        values,
    })
}

/// Result of a forward transform: the map and the mass that could not be
/// represented (Nyquist bins and coefficients below the drop tolerance).
#[derive(Clone, Debug)]
pub struct Extracted {
    pub map: FourierMap,
    pub dropped: f64,
}

/// Inverse of [`grid_transform`]. Frequencies outside `|k_a| <= limit_a`
/// (and the Nyquist bins of even axes) are discarded into `dropped`, as are
/// coefficients of norm below `drop_abs`.
pub fn inverse_grid_transform_with(
    samples: &GridSamples,
    base_dim: usize,
    limits: Option<&[i64]>,
    drop_abs: f64,
) -> Extracted {
    let shape = &samples.shape;
    let dimt = shape.len();
    let k_out = samples.values.len();
    let total: usize = shape.iter().product();
    let lim: Vec<i64> = (0..dimt)
        .map(|a| {
            let half = (shape[a] as i64 - 1) / 2;
            limits.map_or(half, |l| l[a].min(half))
        })
        .collect();
    let norm = 1.0 / total as f64;
    // Per-axis signed frequency and mirrored index offset for every residue.
    let strides: Vec<usize> = (0..dimt).map(|a| shape[a + 1..].iter().product()).collect();
    let mut spectra: Vec<Vec<Complex64>> = Vec::with_capacity(k_out);
    let mut buf = vec![ZERO; total];
    let mut j = 0;
    while j < k_out {
        let pair = j + 1 < k_out;
        for (i, z) in buf.iter_mut().enumerate() {
            *z = Complex64::new(samples.values[j][i], if pair { samples.values[j + 1][i] } else { 0.0 });
        }
        fft_nd(&mut buf, shape, FftDirection::Forward);
        let mut u = vec![ZERO; total];
        let mut v = if pair { vec![ZERO; total] } else { Vec::new() };
        for idx in 0..total {
            let mut rem = idx;
            let mut neg = 0;
            for a in (0..dimt).rev() {
                let n = shape[a];
                let r = rem % n;
                rem /= n;
                neg += ((n - r) % n) * strides[a];
            }
            let zk = buf[idx] * norm;
            let zm = buf[neg].conj() * norm;
            u[idx] = (zk + zm) * 0.5;
            if pair {
                v[idx] = (zk - zm) * Complex64::new(0.0, -0.5);
            }
        }
        spectra.push(u);
        if pair {
            spectra.push(v);
        }
        j += 2;
    }
    let mut map = FourierMap::zero(base_dim, dimt - base_dim, k_out);
    let mut dropped = 0.0;
    let mut key = vec![0i64; dimt];
    for idx in 0..total {
        let mut rem = idx;
        let mut inside = true;
        for a in (0..dimt).rev() {
            let n = shape[a];
            let r = (rem % n) as i64;
            rem /= n;
            key[a] = if 2 * r >= n as i64 { r - n as i64 } else { r };
            if key[a].abs() > lim[a] || (n % 2 == 0 && 2 * key[a].abs() == n as i64) {
                inside = false;
            }
        }
        let n2: f64 = spectra.iter().map(|s| s[idx].norm_sqr()).sum();
        let nrm = n2.sqrt();
        if !inside || nrm < drop_abs || nrm == 0.0 {
            dropped += nrm;
            continue;
        }
        map.coeffs.insert(key.clone(), spectra.iter().map(|s| s[idx]).collect());
    }
    map.symmetrize();
    Extracted { map, dropped }
}

/// Inverse transform keeping every representable frequency.
pub fn inverse_grid_transform(samples: &GridSamples, base_dim: usize) -> FourierMap {
    inverse_grid_transform_with(samples, base_dim, None, 0.0).map
}

// ---------------------------------------------------------------------------
// Serialization as flat records `[n.., m.., re_1, im_1, ..]`, one per +- pair.

#[derive(Serialize, Deserialize)]
struct MapRecords {
    base_dim: usize,
    fiber_dim: usize,
    target_dim: usize,
    records: Vec<Vec<serde_json::Value>>,
}

impl Serialize for FourierMap {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let mut records = Vec::new();
        for (k, v) in &self.coeffs {
            if !(is_positive(k) || k.iter().all(|&x| x == 0)) {
                continue;
            }
            let mut rec: Vec<serde_json::Value> = k.iter().map(|&x| x.into()).collect();
            for z in v {
                rec.push(serde_json::Value::from(z.re));
                rec.push(serde_json::Value::from(z.im));
            }
            records.push(rec);
        }
        MapRecords {
            base_dim: self.base_dim,
            fiber_dim: self.fiber_dim,
            target_dim: self.target_dim,
            records,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for FourierMap {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let m = MapRecords::deserialize(de)?;
        let dim = m.base_dim + m.fiber_dim;
        let mut entries = Vec::with_capacity(m.records.len());
        for (i, rec) in m.records.iter().enumerate() {
            if rec.len() != dim + 2 * m.target_dim {
                return Err(D::Error::custom(format!(
                    "records[{i}]: expected {} numbers, got {}",
                    dim + 2 * m.target_dim,
                    rec.len()
                )));
            }
            let key: Option<Freq> = rec[..dim].iter().map(|v| v.as_i64()).collect();
            let key = key.ok_or_else(|| D::Error::custom(format!("records[{i}]: frequency entries must be integers")))?;
            let vals: Option<Vec<f64>> = rec[dim..].iter().map(|v| v.as_f64()).collect();
            let vals = vals.ok_or_else(|| D::Error::custom(format!("records[{i}]: coefficients must be numbers")))?;
            let v: Vec<Complex64> = vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            entries.push((key, v));
        }
        FourierMap::from_half(m.base_dim, m.fiber_dim, m.target_dim, entries).map_err(D::Error::custom)
    }
}
