//! Run configuration: JSON file plus command-line overrides.
//!
//! Units: lengths in meters, times in seconds, angles in radians. Every
//! physical coefficient is per unit length of the span.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kvbeam::galerkin::{Basis, BasisKind, DEFAULT_SUP_GRID};
use kvbeam::model::Scenario;
use kvbeam::stability::BoundKind;
use kvbeam::timestepper::IntegratorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    #[serde(default = "modal")]
    pub kind: BasisKind,
    #[serde(default = "twelve")]
    pub n_w: usize,
    #[serde(default = "twelve")]
    pub n_phi: usize,
    /// Points of the uniform grid used for sup norms.
    #[serde(default = "sup_grid")]
    pub sup_grid: usize,
}

fn modal() -> BasisKind {
    BasisKind::Modal
}
fn twelve() -> usize {
    12
}
fn sup_grid() -> usize {
    DEFAULT_SUP_GRID
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            kind: modal(),
            n_w: 12,
            n_phi: 12,
            sup_grid: sup_grid(),
        }
    }
}

/// Cartesian grid over parameter values and disturbance scales.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Parameter name → values; the grid is the Cartesian product in key order.
    #[serde(default)]
    pub params: BTreeMap<String, Vec<f64>>,
    /// Multipliers applied to every disturbance component; `[1]` when absent.
    #[serde(default)]
    pub disturbance_scales: Option<Vec<f64>>,
    /// Also simulate each point to report final energy and the minimal constant.
    #[serde(default = "yes")]
    pub simulate: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Registry name; ignored when `inline` is given.
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub inline: Option<Scenario>,
    /// Parameter overrides applied after the scenario is resolved.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Bounds checked by `verify`; the four ISS bounds when empty.
    #[serde(default)]
    pub bounds: Vec<BoundKind>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strict_signs: bool,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            inline: None,
            params: BTreeMap::new(),
            basis: BasisConfig::default(),
            integrator: IntegratorConfig::default(),
            bounds: Vec::new(),
            out_dir: default_out(),
            seed: 0,
            strict_signs: false,
            sweep: None,
        }
    }
}

/// Flags that take precedence over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub modes: Option<(usize, usize)>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict_signs: bool,
}

pub fn parse_modes(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected NW,NP (got '{s}')"))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|e| format!("invalid mode count '{x}': {e}"))
            .and_then(|n| if n == 0 { Err("mode counts must be >= 1".to_string()) } else { Ok(n) })
    };
    Ok((parse(a)?, parse(b)?))
}

/// Reads the file (if any) with field-path diagnostics and applies the flags.
pub fn load(path: Option<&Path>, o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| {
                let inner = e.inner();
                Failure::usage(format!(
                    "config {}: at '{}' (line {}, column {}): {inner}",
                    p.display(),
                    e.path(),
                    inner.line(),
                    inner.column()
                ))
            })?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = &o.scenario {
        cfg.scenario = Some(s.clone());
        cfg.inline = None;
    }
    if let Some((nw, np)) = o.modes {
        cfg.basis.n_w = nw;
        cfg.basis.n_phi = np;
    }
    if let Some(dt) = o.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(t) = o.t_end {
        cfg.integrator.t_end = t;
    }
    if let Some(out) = &o.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    cfg.strict_signs |= o.strict_signs;
    cfg.integrator.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn resolve_scenario(&self) -> Result<Scenario, Failure> {
        let mut sc = match (&self.inline, &self.scenario) {
            (Some(sc), _) => sc.clone(),
            (None, Some(name)) => Scenario::by_name(name).map_err(|e| Failure::usage(e.to_string()))?,
            (None, None) => {
                return Err(Failure::usage(
                    "no scenario given: use --scenario NAME or a config with 'scenario' or 'inline'",
                ))
            }
        };
        for (k, v) in &self.params {
            sc.params = sc.params.with_field(k, *v).map_err(|e| Failure::usage(e.to_string()))?;
        }
        Ok(sc)
    }

    pub fn build_basis(&self, l: f64) -> Result<Basis, Failure> {
        let b = &self.basis;
        Basis::build_with(b.kind, b.n_w, b.n_phi, l, b.sup_grid).map_err(Failure::numerical)
    }

    /// SHA-256 of the canonical JSON of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn selected_bounds(&self) -> Vec<BoundKind> {
        if self.bounds.is_empty() {
            vec![
                BoundKind::EissThm2,
                BoundKind::EiissThm2,
                BoundKind::EissThm3,
                BoundKind::EiissThm3,
            ]
        } else {
            self.bounds.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_parse() {
        assert_eq!(parse_modes("12,8"), Ok((12, 8)));
        assert!(parse_modes("12").is_err());
        assert!(parse_modes("0,3").is_err());
        assert!(parse_modes("a,3").is_err());
    }

    #[test]
    fn overrides_win_and_hash_changes() {
        let base = load(None, &Overrides::default()).unwrap();
        let o = Overrides {
            scenario: Some("zero".into()),
            dt: Some(0.01),
            ..Overrides::default()
        };
        let cfg = load(None, &o).unwrap();
        assert_eq!(cfg.integrator.dt, 0.01);
        assert_eq!(cfg.scenario.as_deref(), Some("zero"));
        assert_ne!(cfg.hash(), base.hash());
        assert_eq!(cfg.hash(), load(None, &o).unwrap().hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn missing_scenario_is_a_usage_error() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.resolve_scenario().unwrap_err().code, 2);
    }

    #[test]
    fn parameter_override_applies() {
        let mut cfg = RunConfig {
            scenario: Some("synthetic".into()),
            ..RunConfig::default()
        };
        cfg.params.insert("b2".into(), 7.5);
        assert_eq!(cfg.resolve_scenario().unwrap().params.b2, 7.5);
        cfg.params.insert("zz".into(), 1.0);
        assert!(cfg.resolve_scenario().is_err());
    }
}
