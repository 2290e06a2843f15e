//! Multi-dimensional FFT on row-major complex arrays.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::cell::RefCell;
use std::sync::Arc;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, dir: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(n, dir))
}

/// Smallest integer `>= n` of the form `2^a 3^b 5^c`.
pub fn fast_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Flat row-major index of a frequency vector, wrapping negatives.
#[inline]
pub(crate) fn wrap_index(k: &[i64], shape: &[usize]) -> usize {
    let mut idx = 0usize;
    for (a, &n) in shape.iter().enumerate() {
        idx = idx * n + k[a].rem_euclid(n as i64) as usize;
    }
    idx
}

/// Arrays above this many points are transformed with rayon when the
/// global pool has more than one thread.
const PARALLEL_THRESHOLD: usize = 1 << 15;
const COLUMN_GROUP: usize = 32;

/// In-place unnormalized transform along every axis.
///
/// `Forward` computes `sum_j x_j e^{-2 pi i jk/N}`, `Inverse` the same with
/// the opposite sign. Each line is transformed independently, so the result
/// does not depend on the number of threads.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], dir: FftDirection) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    let parallel = total >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1;
    for axis in 0..shape.len() {
        let n = shape[axis];
        if n <= 1 {
            continue;
        }
        let stride: usize = shape[axis + 1..].iter().product();
        let fft = plan(n, dir);
        if stride == 1 {
            if parallel {
                let rows_per_task = (PARALLEL_THRESHOLD / n).max(1) * n;
                data.par_chunks_mut(rows_per_task).for_each(|chunk| fft.process(chunk));
            } else {
                fft.process(data);
            }
            continue;
        }
        let block = n * stride;
        let run = |chunk: &mut [Complex64]| {
            let mut tmp = vec![Complex64::new(0.0, 0.0); n * COLUMN_GROUP.min(stride)];
            let mut c0 = 0;
            while c0 < stride {
                let g = COLUMN_GROUP.min(stride - c0);
                let buf = &mut tmp[..n * g];
                for j in 0..n {
                    let row = &chunk[j * stride + c0..j * stride + c0 + g];
                    for (c, v) in row.iter().enumerate() {
                        buf[c * n + j] = *v;
                    }
                }
                fft.process(buf);
                for j in 0..n {
                    let row = &mut chunk[j * stride + c0..j * stride + c0 + g];
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = buf[c * n + j];
                    }
                }
                c0 += g;
            }
        };
        if parallel && total / block > 1 {
            data.par_chunks_mut(block).for_each(run);
        } else {
            data.chunks_mut(block).for_each(run);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_sizes() {
        assert_eq!(fast_size(7), 8);
        assert_eq!(fast_size(49), 50);
        assert_eq!(fast_size(97), 100);
        assert_eq!(fast_size(1), 1);
    }

    #[test]
    fn matches_direct_dft_in_three_axes() {
        let shape = [3usize, 4, 5];
        let total = 60;
        let data: Vec<Complex64> = (0..total)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut fast = data.clone();
        fft_nd(&mut fast, &shape, FftDirection::Forward);
        for k0 in 0..3 {
            for k1 in 0..4 {
                for k2 in 0..5 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j0 in 0..3 {
                        for j1 in 0..4 {
                            for j2 in 0..5 {
                                let ph = -2.0
                                    * std::f64::consts::PI
                                    * ((k0 * j0) as f64 / 3.0 + (k1 * j1) as f64 / 4.0 + (k2 * j2) as f64 / 5.0);
                                acc += data[(j0 * 4 + j1) * 5 + j2] * Complex64::from_polar(1.0, ph);
                            }
                        }
                    }
                    assert!((acc - fast[(k0 * 4 + k1) * 5 + k2]).norm() < 1e-12);
                }
            }
        }
    }
}
