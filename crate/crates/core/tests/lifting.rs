mod common;

use approx::assert_relative_eq;
use kvbeam::galerkin::{Basis, BasisKind};
use kvbeam::lifting::{apply_t, closed_form_norm_sq, projected_norm_sq, project_lifted};
use kvbeam::model::PhysicalParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn projection_reproduces_lifted_profiles() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let p = common::random_params(&mut rng);
        let b = Basis::build_with(BasisKind::Polynomial, 4, 3, p.l, 33).unwrap();
        let e = apply_t(1.7, -0.4, &p).unwrap();
        let (qw, qp) = project_lifted(&e, &b).unwrap();
        for k in 0..=10 {
            let y = p.l * k as f64 / 10.0;
            assert_relative_eq!(b.eval_w(&qw, y, 0), e.eval_g(y, 0), epsilon = 1e-11);
            assert_relative_eq!(b.eval_phi(&qp, y, 0), e.eval_h(y, 0), epsilon = 1e-11);
        }
        assert_relative_eq!(
            projected_norm_sq(&e, &p, &b).unwrap(),
            closed_form_norm_sq(1.7, -0.4, &p),
            max_relative = 1e-11
        );
    }
}

#[test]
fn modal_projection_underestimates_norm() {
    let p = PhysicalParams::section4();
    let e = apply_t(1.0, 1.0, &p).unwrap();
    let exact = closed_form_norm_sq(1.0, 1.0, &p);
    let n8 = projected_norm_sq(&e, &p, &Basis::build(8, 8, p.l).unwrap()).unwrap();
    let n16 = projected_norm_sq(&e, &p, &Basis::build(16, 16, p.l).unwrap()).unwrap();
    assert!(n8 <= n16 && n16 <= exact * (1.0 + 1e-10));
}

proptest! {
    #[test]
    fn lifting_is_linear(
        d3 in -5.0f64..5.0, d4 in -5.0f64..5.0, e3 in -5.0f64..5.0, e4 in -5.0f64..5.0,
        s in -3.0f64..3.0, y in 0.0f64..1.0,
    ) {
        let p = PhysicalParams::synthetic();
        let a = apply_t(d3, d4, &p).unwrap();
        let b = apply_t(e3, e4, &p).unwrap();
        let c = apply_t(s * d3 + e3, s * d4 + e4, &p).unwrap();
        for k in 0..3 {
            let g = s * a.eval_g(y, k) + b.eval_g(y, k);
            let h = s * a.eval_h(y, k) + b.eval_h(y, k);
            prop_assert!((c.eval_g(y, k) - g).abs() <= 1e-12 * (1.0 + g.abs()));
            prop_assert!((c.eval_h(y, k) - h).abs() <= 1e-12 * (1.0 + h.abs()));
        }
    }

    #[test]
    fn norm_identity(d3 in -5.0f64..5.0, d4 in -5.0f64..5.0, a1 in 0.5f64..10.0, a2 in 0.5f64..10.0, l in 0.2f64..3.0) {
        let p = PhysicalParams { a1, a2, l, ..PhysicalParams::synthetic() };
        let e = apply_t(d3, d4, &p).unwrap();
        let exact = closed_form_norm_sq(d3, d4, &p);
        prop_assert!((e.norm_sq(&p) - exact).abs() <= 1e-12 * exact.max(1e-300));
        prop_assert!(e.eval_g(0.0, 0) == 0.0 && e.eval_g(0.0, 1) == 0.0 && e.eval_h(0.0, 0) == 0.0);
    }
}
