//! Composition `f o (id + h)` with a near-identity map and inversion of
//! near-identity maps.
//!
//! The composition is the Taylor series `sum_alpha (d^alpha f) h^alpha / alpha!`
//! evaluated on a product grid. Every derivative `d^alpha f` is exact in
//! Fourier space; the products are pointwise on a grid large enough to hold
//! the bandwidth of every retained term, so the only approximations are the
//! discarded Taylor terms and the coefficient drop tolerance, both of which
//! are accounted for in the returned budget.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fourier::{inverse_grid_transform_with, is_positive, pack_spectrum, FourierMap, GridSamples, ZERO};
use crate::grid::{fast_size, fft_nd};

/// Grid and truncation settings for compositions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionParams {
    /// Minimum grid size per axis as a multiple of the combined bandwidth.
    pub oversample: f64,
    /// Coefficients smaller than `drop_tol` times the largest input
    /// coefficient, or smaller than `drop_abs`, are dropped.
    pub drop_tol: f64,
    pub drop_abs: f64,
    /// Taylor orders beyond this raise [`Error::TaylorDiverged`].
    pub max_order: usize,
}

impl Default for CompositionParams {
    fn default() -> Self {
        CompositionParams {
            oversample: 2.0,
            drop_tol: 1e-14,
            drop_abs: 1e-17,
            max_order: 64,
        }
    }
}

impl CompositionParams {
    /// Absolute drop threshold for data whose largest coefficient is `scale`.
    pub fn drop_threshold(&self, scale: f64) -> f64 {
        (self.drop_tol * scale).max(self.drop_abs)
    }
}

/// Output of a composition together with its error budget.
#[derive(Clone, Debug)]
pub struct Composition {
    pub map: FourierMap,
    /// Majorant bound on everything discarded (Taylor tail, Nyquist bins,
    /// dropped coefficients).
    pub budget: f64,
    pub order: usize,
    pub shape: Vec<usize>,
}

/// Smallness gate for near-identity maps.
pub const CERTIFIED_C1: f64 = 0.25;

struct TaylorPlan {
    /// Multi-indices in depth-first order with the parent position and the
    /// axis added to reach them from the parent.
    nodes: Vec<(Vec<usize>, Option<(usize, usize)>)>,
    pruned: f64,
    order: usize,
}

fn plan_taylor(f: &FourierMap, hsup: &[f64], scale: f64, p: &CompositionParams) -> Result<TaylorPlan> {
    let dim = f.dim();
    let coeffs: Vec<(Vec<f64>, f64)> = f
        .iter()
        .map(|(k, v)| {
            let x: Vec<f64> = k.iter().zip(hsup).map(|(&ka, &ha)| 2.0 * PI * ka.abs() as f64 * ha).collect();
            (x, v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        })
        .collect();
    let bwf = f.axis_bandwidths();
    let rho: f64 = (0..dim).map(|a| 2.0 * PI * bwf[a] as f64 * hsup[a]).sum();
    let tail_factor = rho.exp();
    let bound = |alpha: &[usize]| -> f64 {
        coeffs
            .iter()
            .map(|(x, c)| {
                let mut t = *c;
                for (a, &e) in alpha.iter().enumerate() {
                    for i in 1..=e {
                        t *= x[a] / i as f64;
                    }
                }
                t
            })
            .sum()
    };
    let threshold = 1e-2 * p.drop_threshold(scale);
    let mut plan = TaylorPlan {
        nodes: vec![(vec![0; dim], None)],
        pruned: 0.0,
        order: 0,
    };
    // Depth-first preorder over multisets: children add an axis not smaller
    // than the last axis used, so every multi-index has exactly one parent
    // and each parent precedes its subtree.
    fn visit(
        plan: &mut TaylorPlan,
        pos: usize,
        first_axis: usize,
        ctx: &(&dyn Fn(&[usize]) -> f64, f64, f64, usize, &[bool]),
    ) -> Result<()> {
        let (bound, threshold, tail_factor, max_order, active) = *ctx;
        for a in first_axis..active.len() {
            if !active[a] {
                continue;
            }
            let mut alpha = plan.nodes[pos].0.clone();
            alpha[a] += 1;
            let b = bound(&alpha);
            if b < threshold {
                plan.pruned += b * tail_factor;
                continue;
            }
            let total: usize = alpha.iter().sum();
            if total > max_order {
                return Err(Error::TaylorDiverged(total));
            }
            plan.order = plan.order.max(total);
            plan.nodes.push((alpha, Some((pos, a))));
            let child = plan.nodes.len() - 1;
            visit(plan, child, a, ctx)?;
        }
        Ok(())
    }
    let active: Vec<bool> = (0..dim).map(|a| hsup[a] > 0.0 && bwf[a] > 0).collect();
    visit(&mut plan, 0, 0, &(&bound, threshold, tail_factor, p.max_order, &active))?;
    let TaylorPlan { nodes, pruned, order } = plan;
    Ok(TaylorPlan { nodes, pruned, order })
}

/// Sup-norm majorant of each component of `h`.
fn component_sups(h: &FourierMap) -> Vec<f64> {
    let mut s = vec![0.0; h.target_dim()];
    for (_, v) in h.iter() {
        for (a, z) in s.iter_mut().zip(v) {
            *a += z.norm();
        }
    }
    s
}

/// Weighted bound `sum_k |c_k| e^{tau |k_a|} exp(2 pi sum_b |k_b| H_b)` on the
/// full Taylor series, with `H_b` the `e^{tau |k_a|}`-weighted norm of the
/// `b`-th displacement component.
fn weighted_series_bound(f: &FourierMap, h: &FourierMap, axis: usize, tau: f64) -> f64 {
    let mut hw = vec![0.0; h.target_dim()];
    for (k, v) in h.iter() {
        let w = (tau * k[axis].abs() as f64).exp();
        for (a, z) in hw.iter_mut().zip(v) {
            *a += w * z.norm();
        }
    }
    f.iter()
        .map(|(k, v)| {
            let grow: f64 = k.iter().zip(&hw).map(|(&kb, &hb)| 2.0 * PI * kb.abs() as f64 * hb).sum();
            v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() * (tau * k[axis].abs() as f64 + grow).exp()
        })
        .sum()
}

const DECAY_RATES: [f64; 8] = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];

/// Per-axis frequency limits for the extraction and the resulting bound on
/// aliased and discarded mass.
///
/// With limit `l` and a grid of at least `2l + 1` points, a frequency can
/// only fold into the kept window or be discarded when its component
/// exceeds `l`, and the mass of such frequencies is at most
/// `e^{-tau (l + 1)}` times the weighted bound for that axis. Axes whose
/// exact reach is smaller are taken exactly.
fn grid_limits(f: &FourierMap, h: &FourierMap, exact: &[i64], target: f64) -> (Vec<i64>, f64) {
    let dim = exact.len();
    let bwf = f.axis_bandwidths();
    let per_axis = target / dim as f64;
    let mut limits = Vec::with_capacity(dim);
    let mut alias = 0.0;
    for a in 0..dim {
        let mut best: (i64, f64) = (exact[a], 0.0);
        for tau in DECAY_RATES {
            let m = weighted_series_bound(f, h, a, tau);
            if !m.is_finite() {
                continue;
            }
            // Smallest l with e^{-tau (l + 1)} m <= per_axis.
            let need = ((m / per_axis).ln() / tau - 1.0).ceil().max(0.0);
            let l = (need as i64).max(bwf[a]);
            if l < best.0 {
                best = (l, (-tau * (l + 1) as f64).exp() * m);
            }
        }
        limits.push(best.0);
        alias += best.1;
    }
    (limits, alias)
}

/// `f o (id + h)` where `h` has one component per torus variable.
pub fn compose_with_map(f: &FourierMap, h: &FourierMap, p: &CompositionParams) -> Result<Composition> {
    let dim = f.dim();
    if h.target_dim() != dim || h.base_dim() != f.base_dim() || h.fiber_dim() != f.fiber_dim() {
        return Err(Error::Dimension(format!(
            "displacement has shape ({}, {}, {}), expected ({}, {}, {dim})",
            h.base_dim(),
            h.fiber_dim(),
            h.target_dim(),
            f.base_dim(),
            f.fiber_dim()
        )));
    }
    let c1 = h.cr_majorant(1);
    if c1 >= CERTIFIED_C1 {
        return Err(Error::NotCertified(c1));
    }
    let trivial = f.iter().all(|(k, _)| k.iter().all(|&v| v == 0));
    if h.is_zero() || trivial || f.is_zero() {
        return Ok(Composition {
            map: f.clone(),
            budget: 0.0,
            order: 0,
            shape: Vec::new(),
        });
    }
    let scale = f.max_coeff();
    let hsup = component_sups(h);
    let plan = plan_taylor(f, &hsup, scale, p)?;

    // Bandwidth of every retained term, per axis.
    let bwf = f.axis_bandwidths();
    let bwh: Vec<Vec<i64>> = (0..dim).map(|b| h.component(b).axis_bandwidths()).collect();
    let mut exact = bwf.clone();
    for (alpha, _) in &plan.nodes {
        for a in 0..dim {
            let r = bwf[a] + (0..dim).map(|b| alpha[b] as i64 * bwh[b][a]).sum::<i64>();
            exact[a] = exact[a].max(r);
        }
    }
    let shape_for = |reach: &[i64]| -> Vec<usize> {
        (0..dim)
            .map(|a| {
                // Both inputs are sampled on this grid, so it must resolve them.
                let inputs = (0..dim).map(|b| bwh[b][a]).fold(bwf[a], i64::max) as usize;
                let over = (p.oversample * bwf[a] as f64).ceil() as usize;
                fast_size((2 * reach[a] as usize + 1).max(over).max(2 * inputs + 1))
            })
            .collect()
    };
    let k = f.target_dim();
    let (reach_t, alias_t) = grid_limits(f, h, &exact, p.drop_threshold(scale));
    let shape_t = shape_for(&reach_t);
    let total_t: usize = shape_t.iter().product();
    let log_total = (total_t as f64).log2().max(1.0);
    let taylor_cost = plan.nodes.len() as f64 * k.div_ceil(2) as f64 * total_t as f64 * (2.5 * log_total + 4.0);
    // Direct summation has no truncated terms, so no axis is exact.
    let (reach_d, alias_d) = grid_limits(f, h, &vec![i64::MAX; dim], p.drop_threshold(scale));
    let direct = reach_d.iter().all(|&l| l < i64::MAX).then(|| {
        let shape = shape_for(&reach_d);
        let total: usize = shape.iter().product();
        let half = f.iter().filter(|(key, _)| is_positive(key) || key.iter().all(|&v| v == 0)).count();
        (shape, total as f64 * half as f64 * (dim + 2 * k) as f64)
    });
    let (acc, shape, reach, truncated) = match direct {
        Some((shape, cost)) if cost < taylor_cost => {
            let hs = crate::fourier::grid_transform(h, &shape)?;
            (direct_samples(f, &hs, &shape), shape, reach_d, alias_d)
        }
        _ => {
            let hs = crate::fourier::grid_transform(h, &shape_t)?;
            (taylor_samples(f, &hs, &shape_t, &plan), shape_t, reach_t, alias_t + plan.pruned)
        }
    };
    let samples = GridSamples {
        shape: shape.clone(),
        values: acc,
    };
    let ext = inverse_grid_transform_with(&samples, f.base_dim(), Some(&reach), p.drop_threshold(scale));
    Ok(Composition {
        map: ext.map,
        budget: truncated + ext.dropped,
        order: plan.order,
        shape,
    })
}

/// Grid samples of the truncated Taylor series.
fn taylor_samples(f: &FourierMap, hs: &GridSamples, shape: &[usize], plan: &TaylorPlan) -> Vec<Vec<f64>> {
    let k = f.target_dim();
    let total: usize = shape.iter().product();
    let mut acc = vec![vec![0.0f64; total]; k];
    let mut spec = vec![ZERO; total];
    // Products h^alpha / alpha! along the current depth-first path.
    let mut prods: Vec<Vec<f64>> = Vec::new();
    let mut depth_of: Vec<usize> = vec![0; plan.nodes.len()];
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    for (idx, (alpha, parent)) in plan.nodes.iter().enumerate() {
        if let Some((pp, axis)) = parent {
            let depth = depth_of[*pp] + 1;
            depth_of[idx] = depth;
            prods.truncate(depth - 1);
            let div = alpha[*axis] as f64;
            let hv = &hs.values[*axis];
            let next: Vec<f64> = if depth == 1 {
                hv.iter().map(|v| v / div).collect()
            } else {
                prods[depth - 2].iter().zip(hv).map(|(a, b)| a * b / div).collect()
            };
            prods.push(next);
        }
        let weight = |key: &[i64]| -> Complex64 {
            let mut w = Complex64::new(1.0, 0.0);
            for (a, &e) in alpha.iter().enumerate() {
                for _ in 0..e {
                    w *= two_pi_i * key[a] as f64;
                }
            }
            w
        };
        let mut j = 0;
        while j < k {
            pack_spectrum(f, j, shape, &mut spec, weight);
            fft_nd(&mut spec, shape, FftDirection::Inverse);
            let pair = j + 1 < k;
            match prods.last().filter(|_| parent.is_some()) {
                None => {
                    for (i, z) in spec.iter().enumerate() {
                        acc[j][i] += z.re;
                    }
                    if pair {
                        for (i, z) in spec.iter().enumerate() {
                            acc[j + 1][i] += z.im;
                        }
                    }
                }
                Some(hp) => {
                    for (i, z) in spec.iter().enumerate() {
                        acc[j][i] += z.re * hp[i];
                    }
                    if pair {
                        for (i, z) in spec.iter().enumerate() {
                            acc[j + 1][i] += z.im * hp[i];
                        }
                    }
                }
            }
            j += 2;
        }
    }
    acc
}

/// Grid samples of `f(z + h(z))` summed coefficient by coefficient.
fn direct_samples(f: &FourierMap, hs: &GridSamples, shape: &[usize]) -> Vec<Vec<f64>> {
    let dim = shape.len();
    let k = f.target_dim();
    let total: usize = shape.iter().product();
    let bw: Vec<usize> = f.axis_bandwidths().iter().map(|&b| b as usize).collect();
    let half: Vec<(&Vec<i64>, &Vec<Complex64>, f64)> = f
        .iter()
        .filter_map(|(key, v)| {
            if key.iter().all(|&x| x == 0) {
                Some((key, v, 1.0))
            } else if is_positive(key) {
                Some((key, v, 2.0))
            } else {
                None
            }
        })
        .collect();
    const POINTS_PER_TASK: usize = 512;
    let mut flat = vec![0.0f64; total * k];
    flat.par_chunks_mut(POINTS_PER_TASK * k).enumerate().for_each(|(task, out)| {
        let mut pows: Vec<Vec<Complex64>> = bw.iter().map(|&b| vec![ZERO; b + 1]).collect();
        for (local, o) in out.chunks_mut(k).enumerate() {
            let idx = task * POINTS_PER_TASK + local;
            let mut rem = idx;
            for a in (0..dim).rev() {
                let i = rem % shape[a];
                rem /= shape[a];
                let w = i as f64 / shape[a] as f64 + hs.values[a][idx];
                let e = Complex64::from_polar(1.0, 2.0 * PI * w);
                pows[a][0] = Complex64::new(1.0, 0.0);
                for j in 1..=bw[a] {
                    pows[a][j] = pows[a][j - 1] * e;
                }
            }
            for (key, v, mult) in &half {
                let mut t = Complex64::new(1.0, 0.0);
                for (a, &ka) in key.iter().enumerate() {
                    let p = pows[a][ka.unsigned_abs() as usize];
                    t *= if ka < 0 { p.conj() } else { p };
                }
                for j in 0..k {
                    o[j] += mult * (v[j] * t).re;
                }
            }
        }
    });
    (0..k).map(|j| flat.iter().skip(j).step_by(k).copied().collect()).collect()
}

/// Maximum number of fixed-point sweeps in [`invert_near_identity`].
pub const INVERSE_MAX_ITERS: usize = 50;

/// Result of inverting `id + h`.
#[derive(Clone, Debug)]
pub struct Inverse {
    /// `g` with `(id + h) o (id + g) = id`.
    pub map: FourierMap,
    pub iterations: usize,
    pub last_change: f64,
    pub budget: f64,
}

/// Solves `g = -h o (id + g)` by fixed-point iteration.
///
/// Iteration stops once the sup-majorant of the change falls below
/// `1e-15 |h|` or stops decreasing below `1e-12`; the absolute gate
/// `1e-12` decides convergence after the iteration cap.
pub fn invert_near_identity(h: &FourierMap, p: &CompositionParams) -> Result<Inverse> {
    let c1 = h.cr_majorant(1);
    if c1 >= CERTIFIED_C1 {
        return Err(Error::NotCertified(c1));
    }
    let scale = h.cr_majorant(0);
    let mut g = h.scale(-1.0);
    let mut last_change = f64::INFINITY;
    let mut budget = 0.0;
    if h.is_zero() {
        return Ok(Inverse {
            map: g,
            iterations: 0,
            last_change: 0.0,
            budget,
        });
    }
    for it in 1..=INVERSE_MAX_ITERS {
        let comp = compose_with_map(h, &g, p)?;
        let next = comp.map.scale(-1.0);
        let change = next.sub(&g).cr_majorant(0);
        let stagnated = change >= last_change && change < 1e-12;
        g = next;
        budget = comp.budget;
        if change <= 1e-15 * scale || change == 0.0 || stagnated {
            return Ok(Inverse {
                map: g,
                iterations: it,
                last_change: change,
                budget,
            });
        }
        last_change = change;
    }
    if last_change < 1e-12 {
        return Ok(Inverse {
            map: g,
            iterations: INVERSE_MAX_ITERS,
            last_change,
            budget,
        });
    }
    Err(Error::InverseNotConverged {
        iterations: INVERSE_MAX_ITERS,
        change: last_change,
    })
}
