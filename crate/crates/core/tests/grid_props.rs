use std::f64::consts::TAU;

use proptest::prelude::*;

use pscurv::TorusGrid;

fn trig(coeffs: &[(i32, i32, f64, f64)]) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x| {
        coeffs
            .iter()
            .map(|&(a, b, c, s)| {
                let ph = a as f64 * x[0] + b as f64 * x[1];
                c * ph.cos() + s * ph.sin()
            })
            .sum()
    }
}

fn modes() -> impl Strategy<Value = Vec<(i32, i32, f64, f64)>> {
    prop::collection::vec((-5i32..=5, -5i32..=5, -1.0f64..1.0, -1.0f64..1.0), 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn laplacian_of_trig_polynomials_is_exact(m in modes()) {
        let g = TorusGrid::new(2, 16, TAU).unwrap();
        let v = g.field_from_fn(trig(&m));
        let scaled: Vec<_> = m.iter().map(|&(a, b, c, s)| {
            let k2 = (a * a + b * b) as f64;
            (a, b, -k2 * c, -k2 * s)
        }).collect();
        let exact = g.field_from_fn(trig(&scaled));
        prop_assert!(g.laplacian(&v).unwrap().max_abs_diff(&exact).unwrap() < 1e-10);
    }

    #[test]
    fn greens_solve_inverts_the_laplacian(m in modes(), c in -2.0f64..2.0) {
        let g = TorusGrid::new(2, 16, TAU).unwrap();
        let v = g.field_from_fn(|x| c + trig(&m)(x));
        let back = g.greens_solve(&g.laplacian(&v).unwrap()).unwrap();
        let rebuilt = back.zip_with(&g.constant(v.mean()), |a, b| a + b).unwrap();
        prop_assert!(rebuilt.max_abs_diff(&v).unwrap() < 1e-10);
    }

    #[test]
    fn integration_by_parts_holds(m1 in modes(), m2 in modes()) {
        let g = TorusGrid::new(2, 16, TAU).unwrap();
        let a = g.field_from_fn(trig(&m1));
        let b = g.field_from_fn(trig(&m2));
        let lhs = g.inner_product(&g.laplacian(&a).unwrap(), &b).unwrap();
        let ga = g.gradient(&a).unwrap();
        let gb = g.gradient(&b).unwrap();
        let rhs: f64 = -ga.iter().zip(&gb).map(|(x, y)| g.inner_product(x, y).unwrap()).sum::<f64>();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        prop_assert!(g.integrate(&g.laplacian(&a).unwrap()).unwrap().abs() < 1e-10);
    }
}
