//! Parameter grids: one certificate (and optional run) per point, rows in grid order.

use std::collections::BTreeMap;

use kvbeam::model::{validate_params, PhysicalParams, Scenario};
use kvbeam::stability::{certify, verify_iss_bound, BoundKind, DisturbanceBounds};
use kvbeam::timestepper::{format_number, simulate_scenario};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{RunConfig, SweepConfig};
use crate::output::{show, Output};
use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub index: usize,
    pub values: Vec<f64>,
    pub disturbance_scale: f64,
    pub valid: bool,
    pub feasible: bool,
    pub first_failure: Option<String>,
    pub mu_m: Option<f64>,
    /// `μ_m` when certified, zero for a valid point without a certificate.
    pub certified_rate: Option<f64>,
    pub c_eiss: Option<f64>,
    /// Smallest constant for which the sup-norm estimate holds on the run.
    pub c_min: Option<f64>,
    pub final_energy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Constant,
    NonDecreasing,
    NonIncreasing,
    Mixed,
    Undetermined,
}

/// Parameter values and disturbance scale of one grid point.
pub type Point = (Vec<f64>, f64);

/// Cartesian product in key order, disturbance scale varying fastest.
pub fn grid(sw: &SweepConfig) -> Result<(Vec<String>, Vec<Point>), Failure> {
    let names: Vec<String> = sw.params.keys().cloned().collect();
    let scales = sw.disturbance_scales.clone().unwrap_or_else(|| vec![1.0]);
    if scales.is_empty() || sw.params.values().any(|v| v.is_empty()) {
        return Err(Failure::usage("empty sweep grid"));
    }
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for vals in sw.params.values() {
        points = points
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    let grid = points
        .into_iter()
        .flat_map(|p| scales.iter().map(move |s| (p.clone(), *s)))
        .collect();
    Ok((names, grid))
}

fn apply(base: &PhysicalParams, names: &[String], values: &[f64]) -> Result<PhysicalParams, String> {
    let mut p = *base;
    for (n, v) in names.iter().zip(values) {
        p = p.with_field(n, *v).map_err(|e| e.to_string())?;
    }
    Ok(p)
}

fn evaluate(cfg: &RunConfig, base: &Scenario, names: &[String], index: usize, values: &[f64], scale: f64) -> Row {
    let mut row = Row {
        index,
        values: values.to_vec(),
        disturbance_scale: scale,
        valid: false,
        feasible: false,
        first_failure: None,
        mu_m: None,
        certified_rate: None,
        c_eiss: None,
        c_min: None,
        final_energy: None,
        error: None,
    };
    let result = (|| -> Result<(), String> {
        let p = apply(&base.params, names, values)?;
        let report = validate_params(&p, cfg.strict_signs);
        if !report.passed {
            return Err(report.violations.join("; "));
        }
        let sc = Scenario {
            params: p,
            disturbances: base.disturbances.scaled(scale),
            ..base.clone()
        };
        sc.validate().map_err(|e| e.to_string())?;
        let it = &cfg.integrator;
        let bounds = DisturbanceBounds::from_set(&sc.disturbances, it.t_end, it.dt, p.l).map_err(|e| e.to_string())?;
        let cert = certify(&p, &bounds);
        row.valid = true;
        row.feasible = cert.certified();
        row.first_failure = cert.infeasible.as_ref().map(|i| i.failing.clone());
        row.mu_m = cert.mu_m;
        row.certified_rate = Some(if cert.certified() { cert.mu_m.unwrap_or(0.0) } else { 0.0 });
        row.c_eiss = cert.constants.map(|c| c.c_eiss);
        let simulate = cfg.sweep.as_ref().is_none_or(|s| s.simulate);
        if simulate {
            let basis = cfg.build_basis(p.l).map_err(|f| f.message)?;
            let mut ic = *it;
            ic.sup_norms = false;
            ic.store_states = false;
            let tr = simulate_scenario(&sc, &basis, &ic).map_err(|e| e.to_string())?;
            row.final_energy = Some(tr.last().energy);
            if cert.certified() {
                row.c_min = verify_iss_bound(&tr, &cert, BoundKind::EissThm2).ok().map(|v| v.c_min);
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.valid = false;
        row.error = Some(e);
    }
    row
}

pub fn sweep_rows(cfg: &RunConfig, base: &Scenario) -> Result<(Vec<String>, Vec<Row>), Failure> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Failure::usage("sweep needs a 'sweep' section in the config"))?;
    let (names, grid) = grid(sw)?;
    for n in &names {
        PhysicalParams::section4()
            .with_field(n, 1.0)
            .map_err(|e| Failure::usage(format!("sweep: {e}")))?;
    }
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(i, (v, s))| evaluate(cfg, base, &names, i, v, *s))
        .collect();
    Ok((names, rows))
}

fn classify(diffs: &[f64]) -> Trend {
    if diffs.is_empty() {
        Trend::Undetermined
    } else if diffs.iter().all(|d| *d == 0.0) {
        Trend::Constant
    } else if diffs.iter().all(|d| *d >= 0.0) {
        Trend::NonDecreasing
    } else if diffs.iter().all(|d| *d <= 0.0) {
        Trend::NonIncreasing
    } else {
        Trend::Mixed
    }
}

/// Trend of the certified rate along each axis, other coordinates held fixed;
/// invalid points are skipped.
pub fn trends(names: &[String], rows: &[Row]) -> BTreeMap<String, Trend> {
    let axes = names.len() + 1;
    let coord = |r: &Row, k: usize| if k < names.len() { r.values[k] } else { r.disturbance_scale };
    let mut out = BTreeMap::new();
    for k in 0..axes {
        let mut groups: BTreeMap<Vec<u64>, Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows {
            let Some(mu) = r.certified_rate else { continue };
            let key = (0..axes).filter(|j| *j != k).map(|j| coord(r, j).to_bits()).collect();
            groups.entry(key).or_default().push((coord(r, k), mu));
        }
        let mut diffs = Vec::new();
        for g in groups.values_mut() {
            g.sort_by(|a, b| a.0.total_cmp(&b.0));
            diffs.extend(g.windows(2).filter(|w| w[1].0 > w[0].0).map(|w| w[1].1 - w[0].1));
        }
        let name = if k < names.len() { names[k].clone() } else { "disturbance_scale".into() };
        out.insert(name, classify(&diffs));
    }
    out
}

fn cell(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

pub fn csv(names: &[String], rows: &[Row]) -> String {
    let mut s = String::from("index");
    for n in names {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",disturbance_scale,valid,feasible,first_failure,mu_m,certified_rate,c_eiss,c_min,final_E,error\n");
    for r in rows {
        let mut cells = vec![r.index.to_string()];
        cells.extend(r.values.iter().map(|v| format_number(*v)));
        cells.push(format_number(r.disturbance_scale));
        cells.push(r.valid.to_string());
        cells.push(r.feasible.to_string());
        cells.push(r.first_failure.clone().unwrap_or_default());
        cells.push(cell(r.mu_m));
        cells.push(cell(r.certified_rate));
        cells.push(cell(r.c_eiss));
        cells.push(cell(r.c_min));
        cells.push(cell(r.final_energy));
        cells.push(r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"));
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn run(cfg: &RunConfig) -> Result<u8, Failure> {
    let base = cfg.resolve_scenario()?;
    let (names, rows) = sweep_rows(cfg, &base)?;
    let out = Output::create(cfg)?;
    let trend = trends(&names, &rows);
    let csv_path = out.write_csv("sweep.csv", &csv(&names, &rows))?;
    let invalid = rows.iter().filter(|r| !r.valid).count();
    let feasible = rows.iter().filter(|r| r.feasible).count();
    let json_path = out.write_json(
        "sweep_summary.json",
        json!({
            "parameters": names,
            "points": rows.len(),
            "invalid": invalid,
            "feasible": feasible,
            "certified_rate_trend": trend,
        }),
    )?;
    println!("{} points: {feasible} feasible, {invalid} invalid", rows.len());
    for (k, t) in &trend {
        println!("  certified rate along {k}: {t:?}");
    }
    println!("wrote {} and {}", show(&csv_path), show(&json_path));
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: Vec<f64>, scale: f64, mu: Option<f64>) -> Row {
        Row {
            index: 0,
            values,
            disturbance_scale: scale,
            valid: true,
            feasible: mu.is_some(),
            first_failure: None,
            mu_m: mu,
            certified_rate: mu,
            c_eiss: None,
            c_min: None,
            final_energy: None,
            error: None,
        }
    }

    #[test]
    fn grid_order_is_lexicographic_with_scale_fastest() {
        let mut sw = SweepConfig::default();
        sw.params.insert("b2".into(), vec![1.0, 2.0]);
        sw.params.insert("a1".into(), vec![3.0]);
        sw.disturbance_scales = Some(vec![0.5, 1.0]);
        let (names, g) = grid(&sw).unwrap();
        assert_eq!(names, ["a1", "b2"]);
        let flat: Vec<(f64, f64, f64)> = g.iter().map(|(v, s)| (v[0], v[1], *s)).collect();
        assert_eq!(flat, [(3.0, 1.0, 0.5), (3.0, 1.0, 1.0), (3.0, 2.0, 0.5), (3.0, 2.0, 1.0)]);
    }

    #[test]
    fn empty_lists_are_rejected() {
        let mut sw = SweepConfig::default();
        sw.params.insert("b2".into(), vec![]);
        assert!(grid(&sw).is_err());
        let sw = SweepConfig {
            disturbance_scales: Some(vec![]),
            ..SweepConfig::default()
        };
        assert!(grid(&sw).is_err());
        assert_eq!(grid(&SweepConfig::default()).unwrap().1.len(), 1);
    }

    #[test]
    fn trend_classification() {
        let names = vec!["b2".to_string()];
        let rows = vec![
            row(vec![1.0], 1.0, Some(0.1)),
            row(vec![2.0], 1.0, None),
            row(vec![3.0], 1.0, Some(0.3)),
            row(vec![1.0], 2.0, Some(0.05)),
            row(vec![3.0], 2.0, Some(0.05)),
        ];
        let t = trends(&names, &rows);
        assert_eq!(t["b2"], Trend::NonDecreasing);
        assert_eq!(t["disturbance_scale"], Trend::NonIncreasing);
        assert_eq!(classify(&[1.0, -1.0]), Trend::Mixed);
        assert_eq!(classify(&[]), Trend::Undetermined);
    }
}
