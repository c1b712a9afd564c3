use kvbeam::lifting::{check_boundary_identity, default_pairs, operator_norm_check};
use kvbeam::model::{validate_params, Scenario};
use kvbeam::stability::{
    certify as run_certificate, check_dissipation, verify_iss_bound, BoundKind, Certificate, DisturbanceBounds,
    IssVerdict, LABELS_17,
};
use kvbeam::timestepper::{format_number, simulate_scenario, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{show, Output};
use crate::Failure;

/// Scenario with parameter overrides, checked against the sign conventions.
pub fn prepare(cfg: &RunConfig) -> Result<Scenario, Failure> {
    let sc = cfg.resolve_scenario()?;
    let report = validate_params(&sc.params, cfg.strict_signs);
    for w in report.warnings() {
        eprintln!("warning: sign convention {} violated (value {})", w.constraint, w.value);
    }
    if !report.passed {
        return Err(Failure::usage(format!("invalid parameters: {}", report.violations.join("; "))));
    }
    sc.validate().map_err(Failure::numerical)?;
    Ok(sc)
}

pub fn disturbance_bounds(cfg: &RunConfig, sc: &Scenario) -> Result<DisturbanceBounds, Failure> {
    DisturbanceBounds::from_set(&sc.disturbances, cfg.integrator.t_end, cfg.integrator.dt, sc.params.l)
        .map_err(Failure::numerical)
}

#[derive(Serialize)]
struct RunSummary {
    samples: usize,
    initial_energy: f64,
    final_energy: f64,
    max_energy: f64,
}

fn summary(tr: &Trajectory) -> RunSummary {
    RunSummary {
        samples: tr.samples.len(),
        initial_energy: tr.samples[0].energy,
        final_energy: tr.last().energy,
        max_energy: tr.samples.iter().map(|s| s.energy).fold(0.0, f64::max),
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<u8, Failure> {
    let sc = prepare(cfg)?;
    let basis = cfg.build_basis(sc.params.l)?;
    let out = Output::create(cfg)?;
    let tr = simulate_scenario(&sc, &basis, &cfg.integrator).map_err(Failure::numerical)?;
    let csv = out.write_csv("trajectory.csv", &tr.csv_string())?;
    let s = summary(&tr);
    let json = out.write_json("run.json", json!({ "metadata": tr.meta, "summary": s }))?;
    println!(
        "simulated '{}': {} samples, E(0) = {}, E(end) = {}, max E = {}",
        sc.name, s.samples, s.initial_energy, s.final_energy, s.max_energy
    );
    println!("wrote {} and {}", show(&csv), show(&json));
    Ok(0)
}

fn print_certificate(cert: &Certificate) {
    for c in &cert.assumptions_8.conditions {
        println!(
            "  ({:<4}) lhs {:>12.5e}  rhs {:>12.5e}  margin {:>12.5e}  {}",
            c.name,
            c.lhs,
            c.rhs,
            c.margin,
            if c.holds { "ok" } else { "FAIL" }
        );
    }
    if let Some(inf) = &cert.infeasible {
        println!("infeasible at {}: {}", inf.failing, inf.reason);
        return;
    }
    if let Some(fp) = cert.free_parameters() {
        let r: Vec<String> = (1..=14).map(|k| format!("r{k}={:.4e}", fp.r(k))).collect();
        println!("eps1 = {:.6e}, eps2 = {:.6e}", fp.eps1, fp.eps2);
        println!("{}", r.join(" "));
    }
    if let Some(m) = cert.margins_17 {
        for (label, v) in LABELS_17.iter().zip(m) {
            println!("  ({label}) margin {v:.6e}");
        }
    }
    println!(
        "mu_m = {:.6e} (conservative {:.6e})",
        cert.mu_m.unwrap_or(f64::NAN),
        cert.mu_conservative.unwrap_or(f64::NAN)
    );
    if let Some(c) = cert.constants {
        println!(
            "C1 = {:.4e}  C2 = {:.4e}  C3 = {:.4e}  C5 = {:.4e}  C_EISS = {:.4e}  C_EiISS = {:.4e}",
            c.c1, c.c2, c.c3, c.c5, c.c_eiss, c.c_eiiss
        );
    }
}

pub fn certify(cfg: &RunConfig) -> Result<u8, Failure> {
    let sc = prepare(cfg)?;
    let basis = cfg.build_basis(sc.params.l)?;
    let out = Output::create(cfg)?;
    let bounds = disturbance_bounds(cfg, &sc)?;
    let cert = run_certificate(&sc.params, &bounds);
    let identity = check_boundary_identity(&sc.params, &default_pairs()).map_err(Failure::numerical)?;
    let norm = operator_norm_check(&sc.params, Some(&basis)).map_err(Failure::numerical)?;
    let path = out.write_json(
        "certificate.json",
        json!({
            "certified": cert.certified(),
            "certificate": cert,
            "lifting": { "boundary_identity": identity, "operator_norm": norm },
        }),
    )?;
    println!(
        "scenario '{}': M1 = {} M2 = {} ({:?}), D1 = {:.4e}, D2 = {:.4e}",
        sc.name, bounds.m1, bounds.m2, bounds.m_source, bounds.d1, bounds.d2
    );
    print_certificate(&cert);
    println!("{}; wrote {}", if cert.certified() { "certified" } else { "not certified" }, show(&path));
    Ok(if cert.certified() { 0 } else { 1 })
}

#[derive(Serialize)]
struct VerdictSummary {
    bound: &'static str,
    c_used: f64,
    c_min: f64,
    pass: bool,
    worst_time: f64,
    min_margin: f64,
}

impl From<&IssVerdict> for VerdictSummary {
    fn from(v: &IssVerdict) -> Self {
        Self {
            bound: v.kind.label(),
            c_used: v.c_used,
            c_min: v.c_min,
            pass: v.pass,
            worst_time: v.worst_time,
            min_margin: v.min_margin,
        }
    }
}

#[derive(Serialize)]
struct Refusal {
    bound: &'static str,
    reason: String,
}

fn margins_csv(verdicts: &[IssVerdict]) -> String {
    let mut s = String::from("t");
    for v in verdicts {
        let l = v.kind.label();
        s.push_str(&format!(",{l}_lhs,{l}_rhs,{l}_margin"));
    }
    s.push('\n');
    let n = verdicts.first().map_or(0, |v| v.t.len());
    for i in 0..n {
        s.push_str(&format_number(verdicts[0].t[i]));
        for v in verdicts {
            for x in [v.lhs[i], v.rhs[i], v.margin[i]] {
                s.push(',');
                s.push_str(&format_number(x));
            }
        }
        s.push('\n');
    }
    s
}

pub fn verify(cfg: &RunConfig) -> Result<u8, Failure> {
    let sc = prepare(cfg)?;
    let basis = cfg.build_basis(sc.params.l)?;
    let out = Output::create(cfg)?;
    let bounds = disturbance_bounds(cfg, &sc)?;
    let cert = run_certificate(&sc.params, &bounds);
    let tr = simulate_scenario(&sc, &basis, &cfg.integrator).map_err(Failure::numerical)?;

    let requested = if cert.certified() {
        cfg.selected_bounds()
    } else {
        vec![BoundKind::CorollarySup]
    };
    let mut verdicts = Vec::new();
    let mut refused = Vec::new();
    if !cert.certified() {
        for k in cfg.selected_bounds().into_iter().filter(|k| *k != BoundKind::CorollarySup) {
            refused.push(Refusal {
                bound: k.label(),
                reason: format!(
                    "no certificate: {}",
                    cert.infeasible
                        .as_ref()
                        .map_or("mu_m <= 0".to_string(), |i| format!("{} fails", i.failing))
                ),
            });
        }
    }
    for k in requested {
        match verify_iss_bound(&tr, &cert, k) {
            Ok(v) => verdicts.push(v),
            Err(kvbeam::Error::NoCertificate(_)) => refused.push(Refusal {
                bound: k.label(),
                reason: "no positive decay rate for this bound".into(),
            }),
            Err(e) => return Err(Failure::numerical(e)),
        }
    }
    let dissipation = if cert.certified() && cfg.integrator.record_stride == 1 && cfg.integrator.store_states {
        Some(check_dissipation(&tr, &cert, &basis).map_err(Failure::numerical)?)
    } else {
        None
    };

    let pass = cert.certified()
        && verdicts.iter().all(|v| v.pass)
        && dissipation.as_ref().is_none_or(|d| d.pass);
    let summaries: Vec<VerdictSummary> = verdicts.iter().map(VerdictSummary::from).collect();
    let csv = out.write_csv("margins.csv", &margins_csv(&verdicts))?;
    let json = out.write_json(
        "verdict.json",
        json!({
            "certified": cert.certified(),
            "mu_m": cert.mu_m,
            "first_failure": cert.infeasible.as_ref().map(|i| i.failing.clone()),
            "pass": pass,
            "verdicts": summaries,
            "refused": refused,
            "dissipation": dissipation,
        }),
    )?;
    if !cert.certified() {
        println!("not certified; ISS bounds refused, pointwise bounds only");
    }
    for v in &summaries {
        println!(
            "{:<14} C = {:>10.4e}  min C = {:>10.4e}  min margin = {:>11.4e}  {}",
            v.bound,
            v.c_used,
            v.c_min,
            v.min_margin,
            if v.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(d) = &dissipation {
        println!(
            "dissipation     {} samples, {} violations  {}",
            d.samples_checked,
            d.violations,
            if d.pass { "PASS" } else { "FAIL" }
        );
    }
    println!("wrote {} and {}", show(&csv), show(&json));
    Ok(if pass { 0 } else { 1 })
}
