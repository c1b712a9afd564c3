#![allow(dead_code)]

use kvbeam::galerkin::{Basis, SemiDiscreteState};
use kvbeam::model::{DisturbanceSet, Field, InitialCondition, PhysicalParams, Profile, Signal};
use kvbeam::poly::Polynomial;
use kvbeam::stability::{check_assumptions_8, DisturbanceBounds};
use nalgebra::DVector;
use rand::Rng;

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Roots of `1 + cos k cosh k` by bisection on `[(i−½)π − ½, (i−½)π + ½]`.
pub fn clamped_free_roots(n: usize) -> Vec<f64> {
    let g = |k: f64| 1.0 + k.cos() * k.cosh();
    (1..=n)
        .map(|i| {
            let c = (i as f64 - 0.5) * std::f64::consts::PI;
            let (mut a, mut b) = (c - 0.5, c + 0.5);
            let ga = g(a);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (g(m) > 0.0) == (ga > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Parameters respecting the sign convention.
pub fn random_params(rng: &mut impl Rng) -> PhysicalParams {
    PhysicalParams {
        a1: uniform(rng, 1.0, 6.0),
        b1: uniform(rng, 1.0, 6.0),
        c1: uniform(rng, 0.0, 0.1),
        p1: uniform(rng, 0.0, 0.1),
        q1: uniform(rng, -0.1, 0.0),
        a2: uniform(rng, 8.0, 40.0),
        b2: uniform(rng, 3.0, 10.0),
        c2: uniform(rng, 0.0, 0.1),
        p2: uniform(rng, -0.1, 0.0),
        q2: uniform(rng, 0.0, 0.1),
        l: uniform(rng, 0.6, 1.2),
    }
}

/// A parameter set, bounded disturbances respecting declared `M1, M2`, and
/// the matching bounds, rejected until the structural conditions hold.
pub fn random_certifiable(rng: &mut impl Rng) -> (PhysicalParams, DisturbanceSet, DisturbanceBounds) {
    loop {
        let p = random_params(rng);
        let m1 = uniform(rng, 0.0, 1.0);
        let m2 = uniform(rng, 0.0, 0.5);
        if !check_assumptions_8(&p, m1, m2).feasible {
            continue;
        }
        let d = random_disturbances(rng, p.l, m1, m2);
        // Profiles are bounded by 1 on [0, l] and signals by their amplitude.
        let d1 = d1_amp(&d) * p.l.sqrt();
        let d2 = d2_amp(&d) * p.l.sqrt();
        let b = DisturbanceBounds {
            m1,
            m2,
            d1,
            d2,
            ..DisturbanceBounds::zero()
        };
        return (p, d, b);
    }
}

fn amp(s: &Signal) -> f64 {
    match s {
        Signal::Sine { amplitude, .. } => amplitude.abs(),
        _ => 0.0,
    }
}

fn d1_amp(d: &DisturbanceSet) -> f64 {
    match &d.d1 {
        Field::Separable { signal, .. } => amp(signal),
        _ => 0.0,
    }
}

fn d2_amp(d: &DisturbanceSet) -> f64 {
    match &d.d2 {
        Field::Separable { signal, .. } => amp(signal),
        _ => 0.0,
    }
}

pub fn random_disturbances(rng: &mut impl Rng, l: f64, m1: f64, m2: f64) -> DisturbanceSet {
    let mut sine = |a: f64| Signal::Sine {
        amplitude: a,
        angular_frequency: uniform(rng, 0.5, 20.0),
        phase: uniform(rng, 0.0, std::f64::consts::TAU),
    };
    let s3 = sine(m1);
    let s4 = sine(m2);
    let s1 = sine(0.5);
    let s2 = sine(0.5);
    DisturbanceSet {
        // y/l and (y/l)² stay within [0, 1].
        d1: Field::Separable {
            profile: Polynomial::new(vec![0.0, 1.0 / l]),
            signal: s1,
        },
        d2: Field::Separable {
            profile: Polynomial::new(vec![0.0, 0.0, 1.0 / (l * l)]),
            signal: s2,
        },
        d3: s3,
        d4: s4,
        m1: Some(m1),
        m2: Some(m2),
    }
}

/// Nonzero initial data satisfying the clamped conditions.
pub fn random_ic(rng: &mut impl Rng, l: f64) -> InitialCondition {
    let a = uniform(rng, -0.05, 0.05);
    let b = uniform(rng, -0.05, 0.05);
    let c = uniform(rng, -0.1, 0.1);
    InitialCondition {
        w0: Profile::polynomial(vec![0.0, 0.0, a / (l * l), b / l.powi(3)]),
        w1: Profile::polynomial(vec![0.0, 0.0, b / (l * l)]),
        phi0: Profile::polynomial(vec![0.0, c / l]),
        phi1: Profile::polynomial(vec![0.0, 0.0, -c / (l * l)]),
    }
}

pub fn random_state(rng: &mut impl Rng, basis: &Basis) -> SemiDiscreteState {
    let mut v = |n: usize| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    SemiDiscreteState {
        t: 0.0,
        qw: v(basis.n_w),
        qw_dot: v(basis.n_w),
        qphi: v(basis.n_phi),
        qphi_dot: v(basis.n_phi),
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
