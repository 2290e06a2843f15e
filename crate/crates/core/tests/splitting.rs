use skewtorus::cohomology::difference;
use skewtorus::splitting::{split_twisted, split_untwisted};
use skewtorus::{EquationKind, LatticeMatrix, OrbitSumParams, RandomSpec};

fn cat() -> LatticeMatrix {
    LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
}

fn partner() -> LatticeMatrix {
    LatticeMatrix::from_rows(&[vec![-3, -2], vec![-2, -1]]).unwrap()
}

#[test]
fn exact_twisted_cocycle_has_no_error_part() {
    let omega = RandomSpec { seed: 9, amplitude: 0.01, bandwidth: 4 }.sample(2, 1, 2, true);
    let f = difference(EquationKind::Twisted, &omega, &cat());
    let g = difference(EquationKind::Twisted, &omega, &partner());
    let split = split_twisted(&f, &g, &cat(), &partner(), &OrbitSumParams::default()).unwrap();
    assert!(split.diagnostics.err_f < 1e-12, "{:?}", split.diagnostics);
    assert!(split.diagnostics.err_g < 1e-12, "{:?}", split.diagnostics);
}

#[test]
fn untwisted_split_reconstructs_the_input() {
    let f = RandomSpec { seed: 10, amplitude: 0.01, bandwidth: 3 }.sample(2, 1, 1, true);
    let g = RandomSpec { seed: 11, amplitude: 0.01, bandwidth: 3 }.sample(2, 1, 1, true);
    let split = split_untwisted(&f, &g, &cat(), &partner(), &OrbitSumParams::default()).unwrap();
    let rf = split.avg_f.add(&split.proj_f).add(&split.err_f);
    let rg = split.avg_g.add(&split.proj_g).add(&split.err_g);
    assert!(rf.max_coeff_diff(&f) <= 1e-15 * f.max_coeff());
    assert!(rg.max_coeff_diff(&g) <= 1e-15 * g.max_coeff());
    // The projected parts form an exact cocycle.
    assert!(split.diagnostics.proj_defect < 1e-12 * (split.diagnostics.proj_f + split.diagnostics.proj_g).max(1e-300));
}

#[test]
fn error_part_is_bounded_by_the_commutator() {
    // For arbitrary data the error part is small relative to the input only
    // when the data nearly form a cocycle; shifting by a coboundary leaves it unchanged.
    let f = RandomSpec { seed: 12, amplitude: 0.01, bandwidth: 3 }.sample(2, 1, 2, false);
    let g = RandomSpec { seed: 13, amplitude: 0.01, bandwidth: 3 }.sample(2, 1, 2, false);
    let w = RandomSpec { seed: 14, amplitude: 0.01, bandwidth: 3 }.sample(2, 1, 2, false);
    let p = OrbitSumParams::default();
    let base = split_twisted(&f, &g, &cat(), &partner(), &p).unwrap();
    let shifted = split_twisted(
        &f.add(&difference(EquationKind::Twisted, &w, &cat())),
        &g.add(&difference(EquationKind::Twisted, &w, &partner())),
        &cat(),
        &partner(),
        &p,
    )
    .unwrap();
    assert!(base.err_f.max_coeff_diff(&shifted.err_f) < 1e-12);
    assert!(base.err_g.max_coeff_diff(&shifted.err_g) < 1e-12);
}
