mod common;

use approx::assert_relative_eq;
use kvbeam::galerkin::{
    assemble, clamped_free_wavenumbers, energy, field_norms, project_ic, Basis, BasisKind, SemiDiscreteState,
};
use kvbeam::model::{InitialCondition, PhysicalParams, Profile};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn wavenumbers_match_independent_root_finder() {
    let ours = clamped_free_wavenumbers(12);
    let oracle = common::clamped_free_roots(12);
    for (a, b) in ours.iter().zip(&oracle) {
        assert_relative_eq!(*a, *b, max_relative = 1e-12);
    }
    assert_relative_eq!(ours[0], 1.875_104_068_711_961, max_relative = 1e-13);
}

#[test]
fn modal_grams_match_adaptive_simpson() {
    let l = 1.3;
    let b = Basis::build(6, 5, l).unwrap();
    for i in 0..6 {
        for k in 0..6 {
            let m = common::simpson(&|y| b.beam(i, y, 0) * b.beam(k, y, 0), 0.0, l, 1e-13);
            let s = common::simpson(&|y| b.beam(i, y, 2) * b.beam(k, y, 2), 0.0, l, 1e-10);
            assert_relative_eq!(b.g0_w[(i, k)], m, epsilon = 1e-9);
            assert_relative_eq!(b.g2_w[(i, k)], s, epsilon = 1e-7 * s.abs().max(1.0));
        }
    }
    for j in 0..5 {
        let kappa = (j as f64 + 0.5) * std::f64::consts::PI / l;
        assert_relative_eq!(b.g0_phi[(j, j)], l / 2.0, max_relative = 1e-12);
        assert_relative_eq!(b.g1_phi[(j, j)], kappa * kappa * l / 2.0, max_relative = 1e-12);
        for i in 0..6 {
            let x = common::simpson(&|y| b.beam(i, y, 0) * b.string(j, y, 0), 0.0, l, 1e-13);
            assert_relative_eq!(b.cross[(i, j)], x, epsilon = 1e-9);
        }
    }
}

#[test]
fn shape_functions_satisfy_essential_conditions() {
    for kind in [BasisKind::Modal, BasisKind::Polynomial] {
        let b = Basis::build_with(kind, 5, 4, 0.8, 65).unwrap();
        for i in 0..5 {
            assert!(b.beam(i, 0.0, 0).abs() < 1e-12);
            assert!(b.beam(i, 0.0, 1).abs() < 1e-10);
        }
        for j in 0..4 {
            assert!(b.string(j, 0.0, 0).abs() < 1e-14);
        }
    }
}

/// Continuous energy of the reference initial profiles by adaptive Simpson.
fn reference_e0(p: &PhysicalParams) -> f64 {
    let ic = InitialCondition::section4(p.l);
    let d = |prof: &Profile, k: usize, y: f64| match prof {
        Profile::Polynomial { coeffs } => {
            kvbeam::poly::Polynomial::new(coeffs.clone()).nth_derivative(k).eval(y)
        }
        _ => 0.0,
    };
    let bend = common::simpson(&|y| d(&ic.w0, 2, y).powi(2), 0.0, p.l, 1e-14);
    let twist = common::simpson(&|y| d(&ic.phi0, 1, y).powi(2), 0.0, p.l, 1e-14);
    0.5 * (p.a1 * bend + p.a2 * twist)
}

#[test]
fn initial_energy_exact_in_polynomial_basis() {
    let p = PhysicalParams::section4();
    let e_ref = reference_e0(&p);
    let b = Basis::build_with(BasisKind::Polynomial, 4, 3, p.l, 33).unwrap();
    let proj = project_ic(&InitialCondition::section4(p.l), &b).unwrap();
    assert_relative_eq!(energy(&proj.state, &p, &b), e_ref, max_relative = 1e-10);
    assert!(proj.residuals.iter().all(|r| *r < 1e-10));
}

#[test]
fn initial_energy_converges_in_modal_basis() {
    let p = PhysicalParams::section4();
    let e_ref = reference_e0(&p);
    let err = |n: usize| {
        let b = Basis::build_with(BasisKind::Modal, n, n, p.l, 33).unwrap();
        let proj = project_ic(&InitialCondition::section4(p.l), &b).unwrap();
        (energy(&proj.state, &p, &b) - e_ref).abs() / e_ref
    };
    let (e6, e12, e24) = (err(6), err(12), err(24));
    assert!(e12 < e6 && e24 < e12, "{e6} {e12} {e24}");
    assert!(e24 < 0.03);
}

#[test]
fn stiffness_is_symmetric_positive_definite() {
    let p = PhysicalParams::synthetic();
    let b = Basis::build(6, 6, p.l).unwrap();
    let ops = assemble(&p, &b).unwrap();
    let k = &ops.stiffness;
    assert!((k - k.transpose()).amax() < 1e-10 * k.amax());
    assert!(k.clone().cholesky().is_some());
    assert!(ops.mass.clone().cholesky().is_some());
    assert!(ops.damping.clone().cholesky().is_some());
}

#[test]
fn export_lists_every_block() {
    let p = PhysicalParams::synthetic();
    let b = Basis::build(3, 2, p.l).unwrap();
    let text = assemble(&p, &b).unwrap().export_text();
    for tag in ["[M] 5 5", "[K] 5 5", "[D] 5 5", "[C_vel]", "[C_pos]", "[L3] 5 1", "[L4] 5 1"] {
        assert!(text.contains(tag), "missing {tag}");
    }
}

#[test]
fn sup_norms_bounded_by_trace_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let b = Basis::build(8, 8, 1.0).unwrap();
    for _ in 0..50 {
        let s = common::random_state(&mut rng, &b);
        let f = field_norms(&s, &b);
        assert!(f.sup_phi.powi(2) <= 2.0 * f.phiy.powi(2) * (1.0 + 1e-12));
        assert!(f.sup_w.powi(2) <= 2.0 * f.wy.powi(2) * (1.0 + 1e-12));
        assert!(f.sup_phi >= f.phi_l.abs() - 1e-14);
    }
}

/// A single clamped-free mode: every term of the energy is diagonal.
#[test]
fn single_mode_energy_closed_form() {
    let p = PhysicalParams::synthetic_uncoupled();
    let b = Basis::build(4, 4, p.l).unwrap();
    let beta = b.beam_wavenumbers()[1] / p.l;
    let mut s = SemiDiscreteState::zeros(&b);
    s.qw[1] = 0.3;
    s.qw_dot[1] = -0.2;
    let e = 0.5 * (0.04 + p.a1 * beta.powi(4) * 0.09);
    assert_relative_eq!(energy(&s, &p, &b), e, max_relative = 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_nonnegative_and_quadratic(
        seed in any::<u64>(),
        scale in 0.01f64..10.0,
        l in 0.5f64..2.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = PhysicalParams { l, ..PhysicalParams::synthetic() };
        let b = Basis::build_with(BasisKind::Modal, 4, 4, l, 33).unwrap();
        let s = common::random_state(&mut rng, &b);
        let e = energy(&s, &p, &b);
        prop_assert!(e >= 0.0);
        let scaled = SemiDiscreteState {
            t: 0.0,
            qw: &s.qw * scale,
            qw_dot: &s.qw_dot * scale,
            qphi: &s.qphi * scale,
            qphi_dot: &s.qphi_dot * scale,
        };
        let e2 = energy(&scaled, &p, &b);
        prop_assert!((e2 - scale * scale * e).abs() <= 1e-10 * e2.max(1e-300));
    }

    #[test]
    fn gram_matrices_symmetric(n_w in 1usize..8, n_phi in 1usize..8, l in 0.3f64..3.0) {
        let b = Basis::build_with(BasisKind::Modal, n_w, n_phi, l, 33).unwrap();
        for m in [&b.g0_w, &b.g1_w, &b.g2_w, &b.g0_phi, &b.g1_phi] {
            prop_assert!((m - m.transpose()).amax() <= 1e-9 * m.amax().max(1.0));
        }
        let v = DVector::from_element(n_w, 1.0);
        prop_assert!((v.transpose() * &b.g0_w * &v)[0] > 0.0);
    }
}
