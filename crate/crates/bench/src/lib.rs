//! Shared fixtures for the benchmarks.

use skewtorus::cohomology::difference;
use skewtorus::kam::generate_commuting_perturbation;
use skewtorus::{CompositionParams, EquationKind, FourierMap, LatticeMatrix, RandomSpec, SkewSystem};

/// The cat map.
pub fn cat() -> LatticeMatrix {
    LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).expect("unimodular")
}

/// A commuting partner of [`cat`].
pub fn partner() -> LatticeMatrix {
    LatticeMatrix::from_rows(&[vec![-3, -2], vec![-2, -1]]).expect("unimodular")
}

/// Seeded map on `T^2 x T^1` with `target` components.
pub fn map(seed: u64, amplitude: f64, bandwidth: i64, target: usize) -> FourierMap {
    RandomSpec { seed, amplitude, bandwidth }.sample(2, 1, target, false)
}

/// Exact cocycle `(Omega o A - L Omega, Omega o B - L Omega)` for a random potential.
pub fn cocycle(kind: EquationKind, bandwidth: i64) -> (FourierMap, FourierMap) {
    let target = if kind == EquationKind::Twisted { 2 } else { 1 };
    let omega = map(17, 0.01, bandwidth, target);
    (difference(kind, &omega, &cat()), difference(kind, &omega, &partner()))
}

/// A perturbed pair of commuting skew products.
pub fn perturbed_system(amplitude: f64, bandwidth: i64) -> SkewSystem {
    generate_commuting_perturbation(&cat(), &partner(), 1, 1, amplitude, bandwidth, &CompositionParams::default())
        .expect("certified perturbation")
}
