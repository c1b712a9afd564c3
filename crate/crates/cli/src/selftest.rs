//! Built-in property suite.

use std::time::Instant;

use kvbeam::galerkin::{augmented_energy, energy, field_norms, Basis, BasisKind, SemiDiscreteState};
use kvbeam::lifting::{check_boundary_identity, default_pairs, operator_norm_check};
use kvbeam::model::{DisturbanceSet, PhysicalParams, Scenario};
use kvbeam::stability::{
    certify, check_dissipation, corollary_pairs, sandwich_holds, verify_iss_bound, BoundKind, DisturbanceBounds,
};
use kvbeam::timestepper::{energy_identity_residual, simulate_scenario, IntegratorConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::Failure;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

type Check = fn(&mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error>;

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + 1e-9) + 1e-14
}

fn random_state(rng: &mut ChaCha8Rng, b: &Basis) -> SemiDiscreteState {
    let mut v = |n: usize| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    SemiDiscreteState {
        t: 0.0,
        qw: v(b.n_w),
        qw_dot: v(b.n_w),
        qphi: v(b.n_phi),
        qphi_dot: v(b.n_phi),
    }
}

fn functional_inequalities(rng: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let (mut checked, mut bad) = (0, 0);
    for n in [4usize, 8] {
        for _ in 0..100 {
            let l = rng.gen_range(0.5..2.0);
            let p = PhysicalParams {
                l,
                a1: rng.gen_range(0.5..10.0),
                a2: rng.gen_range(0.5..10.0),
                ..PhysicalParams::synthetic()
            };
            let b = Basis::build_with(BasisKind::Modal, n, n, l, 257)?;
            let s = random_state(rng, &b);
            let f = field_norms(&s, &b);
            let e = energy(&s, &p, &b);
            let mut pairs = vec![
                (f.phi.powi(2), l * l / 2.0 * f.phiy.powi(2)),
                (f.w.powi(2), l.powi(4) / 4.0 * f.wyy.powi(2)),
                (f.wy.powi(2), l * l / 2.0 * f.wyy.powi(2)),
                (f.phi_l.powi(2), 2.0 * l * f.phiy.powi(2)),
                (f.w_l.powi(2), 2.0 * l * f.wy.powi(2)),
            ];
            pairs.extend(corollary_pairs(&p, e, f.sup_phi, f.sup_wy, f.sup_w));
            checked += pairs.len();
            bad += pairs.iter().filter(|(a, b)| !holds(*a, *b)).count();
        }
    }
    Ok((bad == 0, format!("{checked} checks, {bad} violations")))
}

fn lifting_identities(_: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for p in [PhysicalParams::section4(), PhysicalParams::synthetic()] {
        let id = check_boundary_identity(&p, &default_pairs())?;
        let norm = operator_norm_check(&p, None)?;
        ok &= id.pass && norm.max_rel_err < 1e-9;
        worst = worst.max(id.max_residual);
    }
    Ok((ok, format!("max boundary residual {worst:.2e}")))
}

fn certificates(_: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let sc = Scenario::by_name("synthetic")?;
    let b = DisturbanceBounds::from_set(&sc.disturbances, 10.0, 1e-3, sc.params.l)?;
    let cert = certify(&sc.params, &b);
    let margins_ok = cert.margins_17.is_some_and(|m| m.iter().all(|x| *x > 0.0));
    let reference = certify(
        &PhysicalParams::section4(),
        &DisturbanceBounds::from_set(&DisturbanceSet::section4(), 10.0, 1e-3, 1.0)?,
    );
    let failing = reference.infeasible.as_ref().map(|i| i.failing.clone());
    Ok((
        cert.certified() && margins_ok && failing.as_deref() == Some("8b"),
        format!(
            "synthetic mu_m {:.4e}; reference set fails at {}",
            cert.mu_m.unwrap_or(f64::NAN),
            failing.unwrap_or_else(|| "none".into())
        ),
    ))
}

fn rest_state(_: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let sc = Scenario::by_name("zero")?;
    let b = Basis::build(4, 4, sc.params.l)?;
    let tr = simulate_scenario(&sc, &b, &IntegratorConfig::new(1e-2, 2.0))?;
    let max = tr.samples.iter().map(|s| s.energy).fold(0.0, f64::max);
    Ok((max == 0.0, format!("max E {max:e}")))
}

fn energy_identity(_: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let sc = Scenario::by_name("synthetic")?;
    let b = Basis::build_with(BasisKind::Modal, 8, 8, sc.params.l, 65)?;
    let run = |dt: f64| {
        let mut cfg = IntegratorConfig::new(dt, 10.0);
        cfg.sup_norms = false;
        let tr = simulate_scenario(&sc, &b, &cfg)?;
        energy_identity_residual(&tr, &b, &sc.disturbances)
    };
    let (r1, r2) = (run(1e-3)?, run(5e-4)?);
    let ratio = r1.rms / r2.rms;
    Ok((
        (ratio - 4.0).abs() <= 1.2 && r1.rms < 5e-3 * r1.max_energy,
        format!("rms {:.3e}, halving ratio {ratio:.3}", r1.rms),
    ))
}

fn certified_run(_: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let sc = Scenario::by_name("synthetic")?;
    let b = Basis::build(6, 6, sc.params.l)?;
    let bounds = DisturbanceBounds::from_set(&sc.disturbances, 5.0, 1e-3, sc.params.l)?;
    let cert = certify(&sc.params, &bounds);
    let tr = simulate_scenario(&sc, &b, &IntegratorConfig::new(1e-3, 5.0))?;
    let fp = *cert.free_parameters().ok_or(kvbeam::Error::NoCertificate(f64::NAN))?;
    let mut sandwich_bad = 0;
    for (smp, st) in tr.samples.iter().zip(&tr.states) {
        let aug = augmented_energy(st, &cert.params, &b, fp.eps1, fp.eps2)?;
        sandwich_bad += usize::from(!sandwich_holds(smp.energy, aug, cert.km, fp.eps_m()));
    }
    let diss = check_dissipation(&tr, &cert, &b)?;
    let mut all = sandwich_bad == 0 && diss.pass;
    let mut worst: f64 = 0.0;
    for k in [BoundKind::EissThm2, BoundKind::EiissThm2, BoundKind::EissThm3, BoundKind::EiissThm3] {
        let v = verify_iss_bound(&tr, &cert, k)?;
        all &= v.pass;
        worst = worst.max(v.c_min / v.c_used);
    }
    Ok((
        all,
        format!(
            "{sandwich_bad} sandwich and {} dissipation violations, worst C ratio {worst:.3}",
            diss.violations
        ),
    ))
}

fn determinism(_: &mut ChaCha8Rng) -> Result<(bool, String), kvbeam::Error> {
    let sc = Scenario::by_name("synthetic")?;
    let b = Basis::build(4, 4, sc.params.l)?;
    let cfg = IntegratorConfig::new(2e-3, 1.0);
    let a = simulate_scenario(&sc, &b, &cfg)?.csv_string();
    let z = simulate_scenario(&sc, &b, &cfg)?.csv_string();
    Ok((a == z, format!("{} bytes", a.len())))
}

const CHECKS: [(&str, Check); 7] = [
    ("functional inequalities", functional_inequalities),
    ("lifting identities", lifting_identities),
    ("certificate pipeline", certificates),
    ("rest state", rest_state),
    ("energy identity order", energy_identity),
    ("certified run bounds", certified_run),
    ("determinism", determinism),
];

pub fn run(cfg: &RunConfig) -> Result<u8, Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut outcomes = Vec::new();
    for (name, check) in CHECKS {
        let start = Instant::now();
        let (pass, detail) = match check(&mut rng) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        outcomes.push(Outcome {
            name,
            pass,
            detail,
            secs: start.elapsed().as_secs_f64(),
        });
    }
    println!("{:<26} {:<6} {:>8}  detail", "check", "result", "seconds");
    for o in &outcomes {
        println!(
            "{:<26} {:<6} {:>8.3}  {}",
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.secs,
            o.detail
        );
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { 0 } else { 1 })
}
