use proptest::prelude::*;
use skewtorus::fourier::FourierMap;
use skewtorus::{is_ergodic, LatticeMatrix, RandomSpec};

fn cat() -> LatticeMatrix {
    LatticeMatrix::from_rows(&[vec![2, 1], vec![1, 1]]).unwrap()
}

#[test]
fn rejects_non_unimodular() {
    assert!(LatticeMatrix::from_rows(&[vec![2, 0], vec![0, 1]]).is_err());
    assert!(LatticeMatrix::from_rows(&[vec![1, 2]]).is_err());
}

#[test]
fn ergodicity_examples() {
    assert!(is_ergodic(&cat()));
    assert!(!is_ergodic(&LatticeMatrix::identity(2)));
    // Rotation by a quarter turn: charpoly x^2 + 1 is cyclotomic.
    assert!(!is_ergodic(&LatticeMatrix::from_rows(&[vec![0, -1], vec![1, 0]]).unwrap()));
    // Shear: charpoly (x - 1)^2.
    assert!(!is_ergodic(&LatticeMatrix::from_rows(&[vec![1, 1], vec![0, 1]]).unwrap()));
}

#[test]
fn charpoly_of_cat_map() {
    // x^2 - 3x + 1, lowest degree first.
    assert_eq!(cat().charpoly(), vec![1, -3, 1]);
}

fn unimodular_2x2() -> impl Strategy<Value = LatticeMatrix> {
    prop::collection::vec(-4i64..=4, 4).prop_filter_map("not unimodular", |e| LatticeMatrix::new(2, e).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dual_is_inverse_transpose(m in unimodular_2x2()) {
        let prod = m.dual().mul(&m.transpose());
        prop_assert!(prod.is_identity());
        prop_assert!(m.mul(&m.inverse()).is_identity());
    }

    #[test]
    fn pullback_agrees_with_evaluation(m in unimodular_2x2(), seed in 0u64..1000, x0 in 0.0f64..1.0, x1 in 0.0f64..1.0) {
        let f = RandomSpec { seed, amplitude: 1.0, bandwidth: 2 }.sample(2, 0, 1, true);
        let g = f.pullback(&m);
        let mx = [
            m.get(0, 0) as f64 * x0 + m.get(0, 1) as f64 * x1,
            m.get(1, 0) as f64 * x0 + m.get(1, 1) as f64 * x1,
        ];
        let lhs = g.evaluate(&[x0, x1], &[])[0];
        let rhs = f.evaluate(&mx, &[])[0];
        prop_assert!((lhs - rhs).abs() < 1e-11, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn pullbacks_compose(a in unimodular_2x2(), b in unimodular_2x2(), seed in 0u64..1000) {
        let f: FourierMap = RandomSpec { seed, amplitude: 1.0, bandwidth: 2 }.sample(2, 0, 1, false);
        // f(ABx) is f o A pulled back by B.
        let lhs = f.pullback(&a.mul(&b));
        let rhs = f.pullback(&a).pullback(&b);
        prop_assert!(lhs.max_coeff_diff(&rhs) < 1e-15);
    }
}
