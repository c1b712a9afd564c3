//! Physical parameters, disturbance signals, initial conditions and the
//! reference scenarios.
//!
//! The governing system on `y ∈ (0, l)`:
//!
//! ```text
//! w_tt + (a1 w_yy + b1 w_tyy)_yy = c1 φ + p1 φ_t + q1 w_t + d1
//! φ_tt − (a2 φ_y  + b2 φ_ty)_y   = c2 φ + p2 φ_t + q2 w_t + d2
//! w(0) = w_y(0) = φ(0) = 0
//! (a1 w_yy + b1 w_tyy)_y(l) = d3,   (a2 φ_y + b2 φ_ty)(l) = d4
//! ```
//!
//! All types here are immutable once built and `Send + Sync`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::poly::Polynomial;
use crate::quadrature::CompositeRule;
use crate::{Error, Result};

/// The eleven scalars of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Beam stiffness `a1 > 0`.
    pub a1: f64,
    /// Beam Kelvin–Voigt coefficient `b1 > 0`.
    pub b1: f64,
    pub c1: f64,
    pub p1: f64,
    pub q1: f64,
    /// String stiffness `a2 > 0`.
    pub a2: f64,
    /// String Kelvin–Voigt coefficient `b2 > 0`.
    pub b2: f64,
    pub c2: f64,
    pub p2: f64,
    pub q2: f64,
    /// Span length in meters.
    pub l: f64,
}

impl PhysicalParams {
    /// Values used for the reference simulation.
    pub fn section4() -> Self {
        Self {
            a1: 3.0,
            b1: 0.3,
            c1: 0.06,
            p1: 0.04,
            q1: 0.04,
            a2: 5.0,
            b2: 0.5,
            c2: 0.08,
            p2: 0.06,
            q2: 0.06,
            l: 1.0,
        }
    }

    /// Certified parameter set used in the bound-reproduction runs: same
    /// coupling magnitudes as [`PhysicalParams::section4`] with the sign
    /// convention respected, and stiffer/more damped members.
    pub fn synthetic() -> Self {
        Self {
            a1: 3.0,
            b1: 2.0,
            c1: 0.06,
            p1: 0.04,
            q1: -0.04,
            a2: 20.0,
            b2: 5.0,
            c2: 0.08,
            p2: -0.06,
            q2: 0.06,
            l: 1.0,
        }
    }

    /// Same stiffness and damping as [`PhysicalParams::synthetic`], all couplings zero.
    pub fn synthetic_uncoupled() -> Self {
        Self {
            c1: 0.0,
            p1: 0.0,
            q1: 0.0,
            c2: 0.0,
            p2: 0.0,
            q2: 0.0,
            ..Self::synthetic()
        }
    }

    /// Hard constraints only; used as a precondition by the numerical code.
    pub fn check_hard(&self) -> Result<()> {
        let report = validate_params(self, false);
        if report.passed {
            Ok(())
        } else {
            Err(Error::InvalidInput(report.violations.join("; ")))
        }
    }

    pub fn with_field(mut self, name: &str, value: f64) -> Result<Self> {
        match name {
            "a1" => self.a1 = value,
            "b1" => self.b1 = value,
            "c1" => self.c1 = value,
            "p1" => self.p1 = value,
            "q1" => self.q1 = value,
            "a2" => self.a2 = value,
            "b2" => self.b2 = value,
            "c2" => self.c2 = value,
            "p2" => self.p2 = value,
            "q2" => self.q2 = value,
            "l" => self.l = value,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown parameter '{other}'"
                )))
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Hard,
    SignConvention,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub severity: Severity,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub strict_signs: bool,
    pub violations: Vec<String>,
    pub details: Vec<Violation>,
}

impl ValidationReport {
    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.details
            .iter()
            .filter(|v| v.severity == Severity::SignConvention && !self.strict_signs)
    }
}

/// Checks positivity of stiffness, damping and length, nonnegativity of
/// `c1, c2`, and the sign convention `p1 ≥ 0, p2 ≤ 0, q1 ≤ 0, q2 ≥ 0`.
/// Sign violations fail the report only when `strict_signs` is set.
pub fn validate_params(p: &PhysicalParams, strict_signs: bool) -> ValidationReport {
    let mut details = Vec::new();
    let mut hard = |name: &str, value: f64, ok: bool| {
        if !ok || !value.is_finite() {
            details.push(Violation {
                constraint: name.to_string(),
                severity: Severity::Hard,
                value,
            });
        }
    };
    hard("a1 > 0", p.a1, p.a1 > 0.0);
    hard("b1 > 0", p.b1, p.b1 > 0.0);
    hard("a2 > 0", p.a2, p.a2 > 0.0);
    hard("b2 > 0", p.b2, p.b2 > 0.0);
    hard("l > 0", p.l, p.l > 0.0);
    hard("c1 >= 0", p.c1, p.c1 >= 0.0);
    hard("c2 >= 0", p.c2, p.c2 >= 0.0);
    for (name, v) in [("p1", p.p1), ("q1", p.q1), ("p2", p.p2), ("q2", p.q2)] {
        hard(&format!("{name} finite"), v, v.is_finite());
    }
    let mut sign = |name: &str, value: f64, ok: bool| {
        if !ok {
            details.push(Violation {
                constraint: name.to_string(),
                severity: Severity::SignConvention,
                value,
            });
        }
    };
    sign("p1 >= 0", p.p1, p.p1 >= 0.0);
    sign("p2 <= 0", p.p2, p.p2 <= 0.0);
    sign("q1 <= 0", p.q1, p.q1 <= 0.0);
    sign("q2 >= 0", p.q2, p.q2 >= 0.0);

    let failing: Vec<String> = details
        .iter()
        .filter(|v| v.severity == Severity::Hard || strict_signs)
        .map(|v| format!("{} violated (value {})", v.constraint, v.value))
        .collect();
    ValidationReport {
        passed: failing.is_empty(),
        strict_signs,
        violations: failing,
        details,
    }
}

/// Wrapper giving closures `Debug` so they can live inside the serde enums.
#[derive(Clone)]
pub struct TimeFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

#[derive(Clone)]
pub struct SpaceTimeFn(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

#[derive(Clone)]
pub struct SpaceFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<custom t -> f64>")
    }
}
impl fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<custom (y, t) -> f64>")
    }
}
impl fmt::Debug for SpaceFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<custom y -> f64>")
    }
}

/// Closed-form scalar signals addressable by name from configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalName {
    #[serde(rename = "section4.d3")]
    Section4D3,
    #[serde(rename = "section4.d4")]
    Section4D4,
    /// `(1 + e^{-0.3t})(1 + sin(0.5πt) + 3 sin(5πt))`, the time factor shared
    /// by the reference in-domain disturbances.
    #[serde(rename = "section4.envelope")]
    Section4Envelope,
}

impl SignalName {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            SignalName::Section4D3 => {
                (1.0 + 2.0 * (-0.2 * t).exp()) * (0.2 * PI * t).cos() * (3.0 * PI * t).sin()
            }
            SignalName::Section4D4 => {
                0.5 * (1.0 + (-0.2 * t).exp()) * (0.2 * PI * t).sin() * (3.0 * PI * t).cos()
            }
            SignalName::Section4Envelope => {
                (1.0 + (-0.3 * t).exp())
                    * (1.0 + (0.5 * PI * t).sin() + 3.0 * (5.0 * PI * t).sin())
            }
        }
    }
}

/// Closed-form distributed fields addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldName {
    #[serde(rename = "section4.d1")]
    Section4D1,
    #[serde(rename = "section4.d2")]
    Section4D2,
}

fn one() -> f64 {
    1.0
}

/// A scalar time signal `t ↦ s(t)`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Registry {
        name: SignalName,
        #[serde(default = "one")]
        scale: f64,
    },
    Sine {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise-linear through `(t[i], values[i])`, held constant outside.
    Tabulated {
        t: Vec<f64>,
        values: Vec<f64>,
    },
    #[serde(skip)]
    Custom(TimeFn),
}

impl Signal {
    pub fn registry(name: SignalName, scale: f64) -> Self {
        Signal::Registry { name, scale }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Signal::Custom(TimeFn(Arc::new(f)))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::Registry { name, scale } => scale * name.eval(t),
            Signal::Sine {
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).sin(),
            Signal::Tabulated { t: ts, values } => interp1(ts, values, t),
            Signal::Custom(f) => (f.0)(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Signal::Zero => true,
            Signal::Constant { value } => *value == 0.0,
            Signal::Registry { scale, .. } => *scale == 0.0,
            Signal::Sine { amplitude, .. } => *amplitude == 0.0,
            Signal::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
            Signal::Custom(_) => false,
        }
    }

    pub fn scaled(&self, s: f64) -> Signal {
        match self {
            Signal::Zero => Signal::Zero,
            Signal::Constant { value } => Signal::Constant { value: value * s },
            Signal::Registry { name, scale } => Signal::Registry {
                name: *name,
                scale: scale * s,
            },
            Signal::Sine {
                amplitude,
                angular_frequency,
                phase,
            } => Signal::Sine {
                amplitude: amplitude * s,
                angular_frequency: *angular_frequency,
                phase: *phase,
            },
            Signal::Tabulated { t, values } => Signal::Tabulated {
                t: t.clone(),
                values: values.iter().map(|v| v * s).collect(),
            },
            Signal::Custom(f) => {
                let f = f.0.clone();
                Signal::custom(move |t| s * f(t))
            }
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if let Signal::Tabulated { t, values } = self {
            validate_grid(t, what)?;
            if t.len() != values.len() {
                return Err(Error::InvalidInput(format!(
                    "{what}: {} sample times but {} values",
                    t.len(),
                    values.len()
                )));
            }
        }
        Ok(())
    }
}

fn validate_grid(g: &[f64], what: &str) -> Result<()> {
    if g.is_empty() {
        return Err(Error::InvalidInput(format!("{what}: empty table")));
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(format!(
            "{what}: table abscissae must be strictly increasing"
        )));
    }
    Ok(())
}

/// Locates `x` in a strictly increasing grid: returns `(i, θ)` so that the
/// value is `(1-θ) v[i] + θ v[i+1]`; clamps outside the grid.
fn bracket(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[n - 1] {
        return (n - 2, 1.0);
    }
    let i = grid.partition_point(|&g| g <= x) - 1;
    let theta = (x - grid[i]) / (grid[i + 1] - grid[i]);
    (i, theta)
}

fn interp1(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if ts.len() == 1 {
        return vs[0];
    }
    let (i, th) = bracket(ts, t);
    (1.0 - th) * vs[i] + th * vs[i + 1]
}

/// A distributed load `(y, t) ↦ d(y, t)`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    #[default]
    Zero,
    Registry {
        name: FieldName,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `profile(y) · signal(t)` with a polynomial profile.
    Separable {
        profile: Polynomial,
        signal: Signal,
    },
    /// Bilinear in `(y, t)`; `values[i][j]` is the sample at `(t[i], y[j])`.
    Tabulated {
        y: Vec<f64>,
        t: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    #[serde(skip)]
    Custom(SpaceTimeFn),
}

impl Field {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Field::Custom(SpaceTimeFn(Arc::new(f)))
    }

    /// Separable representation `(profile, signal)` when the field has one.
    pub fn separable(&self) -> Option<(Polynomial, Signal)> {
        match self {
            Field::Zero => Some((Polynomial::zero(), Signal::Zero)),
            Field::Registry { name, scale } => {
                let amp = match name {
                    FieldName::Section4D1 => 2.0,
                    FieldName::Section4D2 => -0.2,
                };
                Some((
                    Polynomial::new(vec![0.0, amp * scale]),
                    Signal::registry(SignalName::Section4Envelope, 1.0),
                ))
            }
            Field::Separable { profile, signal } => Some((profile.clone(), signal.clone())),
            Field::Tabulated { .. } | Field::Custom(_) => None,
        }
    }

    pub fn eval(&self, y: f64, t: f64) -> f64 {
        match self {
            Field::Zero => 0.0,
            Field::Registry { .. } | Field::Separable { .. } => {
                let (p, s) = self.separable().expect("separable variant");
                p.eval(y) * s.eval(t)
            }
            Field::Tabulated { y: ys, t: ts, values } => {
                let (it, tht) = bracket(ts, t);
                let row = |i: usize| interp1(ys, &values[i], y);
                if ts.len() == 1 {
                    row(0)
                } else {
                    (1.0 - tht) * row(it) + tht * row(it + 1)
                }
            }
            Field::Custom(f) => (f.0)(y, t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Field::Zero => true,
            Field::Registry { scale, .. } => *scale == 0.0,
            Field::Separable { profile, signal } => profile.is_zero() || signal.is_zero(),
            Field::Tabulated { values, .. } => values.iter().flatten().all(|v| *v == 0.0),
            Field::Custom(_) => false,
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        match self {
            Field::Zero => Field::Zero,
            Field::Registry { name, scale } => Field::Registry {
                name: *name,
                scale: scale * s,
            },
            Field::Separable { profile, signal } => Field::Separable {
                profile: profile.scale(s),
                signal: signal.clone(),
            },
            Field::Tabulated { y, t, values } => Field::Tabulated {
                y: y.clone(),
                t: t.clone(),
                values: values
                    .iter()
                    .map(|r| r.iter().map(|v| v * s).collect())
                    .collect(),
            },
            Field::Custom(f) => {
                let f = f.0.clone();
                Field::custom(move |y, t| s * f(y, t))
            }
        }
    }

    /// `‖d(·, t)‖_{L²(0,l)}`; exact for separable fields, quadrature otherwise.
    pub fn l2_norm(&self, t: f64, l: f64, rule: &CompositeRule) -> f64 {
        match self.separable() {
            Some((p, s)) => {
                if p.is_zero() {
                    return 0.0;
                }
                s.eval(t).abs() * p.mul(&p).integrate(0.0, l).max(0.0).sqrt()
            }
            None => rule.integrate(|y| self.eval(y, t).powi(2)).sqrt(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        match self {
            Field::Separable { signal, .. } => signal.validate(what),
            Field::Tabulated { y, t, values } => {
                validate_grid(y, what)?;
                validate_grid(t, what)?;
                if values.len() != t.len() || values.iter().any(|r| r.len() != y.len()) {
                    return Err(Error::InvalidInput(format!(
                        "{what}: table must have {} rows of {} values",
                        t.len(),
                        y.len()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// In-domain fields `d1, d2`, boundary signals `d3, d4`, and optional declared
/// sup bounds `M1 ≥ sup|d3|`, `M2 ≥ sup|d4|`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DisturbanceSet {
    #[serde(default)]
    pub d1: Field,
    #[serde(default)]
    pub d2: Field,
    #[serde(default)]
    pub d3: Signal,
    #[serde(default)]
    pub d4: Signal,
    #[serde(default)]
    pub m1: Option<f64>,
    #[serde(default)]
    pub m2: Option<f64>,
}

impl DisturbanceSet {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn section4() -> Self {
        Self {
            d1: Field::Registry {
                name: FieldName::Section4D1,
                scale: 1.0,
            },
            d2: Field::Registry {
                name: FieldName::Section4D2,
                scale: 1.0,
            },
            d3: Signal::registry(SignalName::Section4D3, 1.0),
            d4: Signal::registry(SignalName::Section4D4, 1.0),
            // (1 + 2e^{-0.2t}) ≤ 3 and 0.5 (1 + e^{-0.2t}) ≤ 1.
            m1: Some(3.0),
            m2: Some(1.0),
        }
    }

    /// Every component multiplied by `s`, declared bounds included.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            d1: self.d1.scaled(s),
            d2: self.d2.scaled(s),
            d3: self.d3.scaled(s),
            d4: self.d4.scaled(s),
            m1: self.m1.map(|m| m * s.abs()),
            m2: self.m2.map(|m| m * s.abs()),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d1.is_zero() && self.d2.is_zero() && self.d3.is_zero() && self.d4.is_zero()
    }

    pub fn validate(&self) -> Result<()> {
        self.d1.validate("d1")?;
        self.d2.validate("d2")?;
        self.d3.validate("d3")?;
        self.d4.validate("d4")?;
        for (name, m) in [("m1", self.m1), ("m2", self.m2)] {
            if let Some(m) = m {
                if !(m >= 0.0) {
                    return Err(Error::InvalidInput(format!("{name} must be >= 0")));
                }
            }
        }
        Ok(())
    }

    /// Fails if a declared bound is below `|d3(t)|` or `|d4(t)|`.
    pub fn check_declared(&self, t: f64, d3: f64, d4: f64) -> Result<()> {
        let slack = |m: f64| m * (1.0 + 1e-12) + 1e-300;
        if let Some(m1) = self.m1 {
            if d3.abs() > slack(m1) {
                return Err(Error::BoundExceeded {
                    signal: "d3",
                    t,
                    value: d3,
                    bound: m1,
                });
            }
        }
        if let Some(m2) = self.m2 {
            if d4.abs() > slack(m2) {
                return Err(Error::BoundExceeded {
                    signal: "d4",
                    t,
                    value: d4,
                    bound: m2,
                });
            }
        }
        Ok(())
    }
}

/// Running disturbance norms over `[0, t]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningNorms {
    pub sup_d3: f64,
    pub sup_d4: f64,
    pub sup_l2_d1: f64,
    pub sup_l2_d2: f64,
    pub int_abs_d3: f64,
    pub int_abs_d4: f64,
    /// `∫ ‖d1(·,s)‖² ds`
    pub int_sq_d1: f64,
    pub int_sq_d2: f64,
    pub int_sq_d3: f64,
    pub int_sq_d4: f64,
}

/// Instantaneous disturbance magnitudes at one time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSample {
    pub t: f64,
    pub d1_l2: f64,
    pub d2_l2: f64,
    pub d3: f64,
    pub d4: f64,
}

impl DisturbanceSample {
    pub fn at(d: &DisturbanceSet, t: f64, l: f64, rule: &CompositeRule) -> Self {
        Self {
            t,
            d1_l2: d.d1.l2_norm(t, l, rule),
            d2_l2: d.d2.l2_norm(t, l, rule),
            d3: d.d3.eval(t),
            d4: d.d4.eval(t),
        }
    }
}

/// Grid suprema plus trapezoidal time integrals, updated sample by sample.
#[derive(Debug, Clone, Default)]
pub struct NormAccumulator {
    last: Option<DisturbanceSample>,
    norms: RunningNorms,
}

impl NormAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, s: DisturbanceSample) {
        let n = &mut self.norms;
        n.sup_d3 = n.sup_d3.max(s.d3.abs());
        n.sup_d4 = n.sup_d4.max(s.d4.abs());
        n.sup_l2_d1 = n.sup_l2_d1.max(s.d1_l2);
        n.sup_l2_d2 = n.sup_l2_d2.max(s.d2_l2);
        if let Some(prev) = self.last {
            let h = s.t - prev.t;
            let trap = |a: f64, b: f64| 0.5 * h * (a + b);
            n.int_abs_d3 += trap(prev.d3.abs(), s.d3.abs());
            n.int_abs_d4 += trap(prev.d4.abs(), s.d4.abs());
            n.int_sq_d1 += trap(prev.d1_l2.powi(2), s.d1_l2.powi(2));
            n.int_sq_d2 += trap(prev.d2_l2.powi(2), s.d2_l2.powi(2));
            n.int_sq_d3 += trap(prev.d3.powi(2), s.d3.powi(2));
            n.int_sq_d4 += trap(prev.d4.powi(2), s.d4.powi(2));
        }
        self.last = Some(s);
    }

    pub fn norms(&self) -> RunningNorms {
        self.norms
    }
}

/// Running norms of `d` over `[0, t]` on a uniform grid of step `dt`
/// (the last interval is shortened to land on `t`), trapezoidal integrals.
pub fn running_norms(d: &DisturbanceSet, t: f64, dt: f64, l: f64) -> Result<RunningNorms> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("grid step must be positive".into()));
    }
    let rule = CompositeRule::standard(l);
    let mut acc = NormAccumulator::new();
    let n = (t / dt).floor() as usize;
    for k in 0..=n {
        acc.push(DisturbanceSample::at(d, k as f64 * dt, l, &rule));
    }
    if (n as f64) * dt < t * (1.0 - 1e-14) {
        acc.push(DisturbanceSample::at(d, t, l, &rule));
    }
    Ok(acc.norms())
}

/// Initial displacement/velocity profile on `[0, l]`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Zero,
    Polynomial {
        coeffs: Vec<f64>,
    },
    #[serde(skip)]
    Custom(SpaceFn),
}

impl Profile {
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Profile::Polynomial { coeffs }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Custom(SpaceFn(Arc::new(f)))
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Polynomial { coeffs } => Polynomial::new(coeffs.clone()).eval(y),
            Profile::Custom(f) => (f.0)(y),
        }
    }

    fn derivative_at_zero(&self) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Polynomial { coeffs } => coeffs.get(1).copied().unwrap_or(0.0),
            Profile::Custom(f) => {
                let h = 1e-6;
                ((f.0)(h) - (f.0)(0.0)) / h
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Polynomial { coeffs } => coeffs.iter().all(|c| *c == 0.0),
            Profile::Custom(_) => false,
        }
    }
}

/// `(w0, w1, φ0, φ1)` with `w0(0) = w0'(0) = 0` and `φ0(0) = 0`.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct InitialCondition {
    #[serde(default)]
    pub w0: Profile,
    #[serde(default)]
    pub w1: Profile,
    #[serde(default)]
    pub phi0: Profile,
    #[serde(default)]
    pub phi1: Profile,
}

impl InitialCondition {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `w0 = 0.15 y²(y − 3l)/(6l²)` m and `φ0 = 8 y²/l²` degrees, stored in radians.
    pub fn section4(l: f64) -> Self {
        let s = 0.15 / (6.0 * l * l);
        let deg = PI / 180.0;
        Self {
            w0: Profile::polynomial(vec![0.0, 0.0, -3.0 * l * s, s]),
            w1: Profile::Zero,
            phi0: Profile::polynomial(vec![0.0, 0.0, 8.0 * deg / (l * l)]),
            phi1: Profile::Zero,
        }
    }

    pub fn check_essential_bcs(&self) -> Result<()> {
        let tol = 1e-12;
        let checks = [
            ("w0(0)", self.w0.eval(0.0), tol),
            ("w0'(0)", self.w0.derivative_at_zero(), 1e-6),
            ("w1(0)", self.w1.eval(0.0), tol),
            ("w1'(0)", self.w1.derivative_at_zero(), 1e-6),
            ("phi0(0)", self.phi0.eval(0.0), tol),
            ("phi1(0)", self.phi1.eval(0.0), tol),
        ];
        for (name, v, tol) in checks {
            if v.abs() > tol {
                return Err(Error::InvalidInput(format!(
                    "initial condition violates {name} = 0 (got {v})"
                )));
            }
        }
        Ok(())
    }
}

/// How the tip conditions are closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `d3`, `d4` act as exogenous tip disturbances.
    #[default]
    OpenLoop,
    /// `d3 = k1 (w_t(l) + ε2 w(l))`, `d4 = −k2 (φ_t(l) + ε1 φ(l))`; exogenous
    /// `d3`, `d4` are ignored.
    Feedback {
        k1: f64,
        k2: f64,
        eps1: f64,
        eps2: f64,
    },
    /// Feedback plus the exogenous `d3`, `d4`.
    FeedbackPlusDisturbance {
        k1: f64,
        k2: f64,
        eps1: f64,
        eps2: f64,
    },
}

/// Tip feedback gains in a form the assembler can fold into the matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackGains {
    pub k1: f64,
    pub k2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl BoundaryMode {
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.feedback() {
            if !(g.k1 >= 0.0 && g.k2 >= 0.0) {
                return Err(Error::InvalidInput("feedback gains must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn feedback(&self) -> Option<FeedbackGains> {
        match *self {
            BoundaryMode::OpenLoop => None,
            BoundaryMode::Feedback { k1, k2, eps1, eps2 }
            | BoundaryMode::FeedbackPlusDisturbance { k1, k2, eps1, eps2 } => {
                Some(FeedbackGains { k1, k2, eps1, eps2 })
            }
        }
    }

    /// Whether the exogenous tip signals enter the dynamics.
    pub fn uses_tip_disturbances(&self) -> bool {
        !matches!(self, BoundaryMode::Feedback { .. })
    }
}

/// Parameters, disturbances, initial condition and tip closure of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub params: PhysicalParams,
    #[serde(default)]
    pub disturbances: DisturbanceSet,
    #[serde(default)]
    pub ic: InitialCondition,
    #[serde(default)]
    pub mode: BoundaryMode,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub const SCENARIO_NAMES: &[&str] = &[
    "section4",
    "section4-free",
    "zero",
    "synthetic",
    "synthetic-free",
    "synthetic-feedback",
];

/// Scale applied to the reference disturbances in the certified runs; keeps
/// the tip bounds at `M1 = 0.9`, `M2 = 0.3`.
pub const SYNTHETIC_DISTURBANCE_SCALE: f64 = 0.3;

const PHI0_NOTE: &str = "phi0 = 8 y^2/l^2 given in degrees; stored in radians (factor pi/180)";

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.check_hard()?;
        self.disturbances.validate()?;
        self.ic.check_essential_bcs()?;
        self.mode.validate()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "section4" => Ok(section4_scenario()),
            "section4-free" => Ok(Scenario {
                name: name.into(),
                disturbances: DisturbanceSet::zero(),
                ..section4_scenario()
            }),
            "zero" => Ok(Scenario {
                name: name.into(),
                params: PhysicalParams::section4(),
                disturbances: DisturbanceSet::zero(),
                ic: InitialCondition::zero(),
                mode: BoundaryMode::OpenLoop,
                notes: vec![],
            }),
            "synthetic" => {
                let p = PhysicalParams::synthetic();
                Ok(Scenario {
                    name: name.into(),
                    params: p,
                    disturbances: DisturbanceSet::section4().scaled(SYNTHETIC_DISTURBANCE_SCALE),
                    ic: InitialCondition::section4(p.l),
                    mode: BoundaryMode::OpenLoop,
                    notes: vec![PHI0_NOTE.into()],
                })
            }
            "synthetic-free" => Ok(Scenario {
                name: name.into(),
                disturbances: DisturbanceSet {
                    m1: Some(0.0),
                    m2: Some(0.0),
                    ..DisturbanceSet::zero()
                },
                ..Scenario::by_name("synthetic")?
            }),
            "synthetic-feedback" => Ok(Scenario {
                name: name.into(),
                mode: BoundaryMode::Feedback {
                    k1: 1.0,
                    k2: 1.0,
                    eps1: 0.05,
                    eps2: 0.05,
                },
                ..Scenario::by_name("synthetic-free")?
            }),
            other => Err(Error::InvalidInput(format!(
                "unknown scenario '{other}' (known: {})",
                SCENARIO_NAMES.join(", ")
            ))),
        }
    }
}

/// Reference scenario: parameters, the four closed-form disturbances and
/// the polynomial initial profiles (zero initial velocities).
pub fn section4_scenario() -> Scenario {
    let params = PhysicalParams::section4();
    Scenario {
        name: "section4".into(),
        params,
        disturbances: DisturbanceSet::section4(),
        ic: InitialCondition::section4(params.l),
        mode: BoundaryMode::OpenLoop,
        notes: vec![PHI0_NOTE.into()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn section4_params_pass_relaxed_and_fail_strict() {
        let p = PhysicalParams::section4();
        assert!(validate_params(&p, false).passed);
        let strict = validate_params(&p, true);
        assert!(!strict.passed);
        let joined = strict.violations.join("|");
        assert!(joined.contains("p2 <= 0"));
        assert!(joined.contains("q1 <= 0"));
    }

    #[test]
    fn zero_stiffness_is_a_hard_failure() {
        let p = PhysicalParams {
            a1: 0.0,
            ..PhysicalParams::section4()
        };
        let r = validate_params(&p, false);
        assert!(!r.passed);
        assert!(r.details.iter().any(|v| v.severity == Severity::Hard));
        assert!(p.check_hard().is_err());
    }

    #[test]
    fn negative_c_is_hard() {
        let p = PhysicalParams {
            c2: -0.1,
            ..PhysicalParams::synthetic()
        };
        assert!(!validate_params(&p, false).passed);
    }

    #[test]
    fn scenario_signals_at_known_points() {
        let s = section4_scenario();
        assert_eq!(s.disturbances.d3.eval(0.0), 0.0);
        assert_relative_eq!(s.disturbances.d1.eval(1.0, 0.0), 4.0, epsilon = 1e-15);
        assert_relative_eq!(s.ic.w0.eval(1.0), -0.05, epsilon = 1e-15);
        s.ic.check_essential_bcs().unwrap();
    }

    #[test]
    fn phi0_is_stored_in_radians() {
        let ic = InitialCondition::section4(1.0);
        assert_relative_eq!(ic.phi0.eval(1.0), 8.0 * PI / 180.0, epsilon = 1e-15);
    }

    #[test]
    fn running_norms_of_constant_signal() {
        let d = DisturbanceSet {
            d3: Signal::Constant { value: 1.0 },
            ..Default::default()
        };
        let n = running_norms(&d, 2.0, 1e-2, 1.0).unwrap();
        assert_relative_eq!(n.sup_d3, 1.0);
        assert_relative_eq!(n.int_abs_d3, 2.0, epsilon = 1e-12);
        assert_relative_eq!(n.int_sq_d3, 2.0, epsilon = 1e-12);
        assert_eq!(n.sup_d4, 0.0);
    }

    #[test]
    fn running_norms_zero_and_negative_time() {
        let n = running_norms(&DisturbanceSet::zero(), 3.0, 0.1, 1.0).unwrap();
        assert_eq!(n, RunningNorms::default());
        assert!(matches!(
            running_norms(&DisturbanceSet::zero(), -1.0, 0.1, 1.0),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn feedback_without_gain_matches_open_loop_tip() {
        let m = BoundaryMode::Feedback {
            k1: 0.0,
            k2: 0.0,
            eps1: 0.1,
            eps2: 0.1,
        };
        assert!(!m.uses_tip_disturbances());
        assert!(m.validate().is_ok());
        let bad = BoundaryMode::Feedback {
            k1: -1.0,
            k2: 0.0,
            eps1: 0.1,
            eps2: 0.1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tabulated_signal_interpolates_and_holds() {
        let s = Signal::Tabulated {
            t: vec![0.0, 1.0, 3.0],
            values: vec![0.0, 2.0, -2.0],
        };
        assert_relative_eq!(s.eval(0.5), 1.0);
        assert_relative_eq!(s.eval(2.0), 0.0);
        assert_relative_eq!(s.eval(10.0), -2.0);
        assert_relative_eq!(s.eval(-1.0), 0.0);
    }

    #[test]
    fn tabulated_field_is_bilinear() {
        let f = Field::Tabulated {
            y: vec![0.0, 1.0],
            t: vec![0.0, 1.0],
            values: vec![vec![0.0, 1.0], vec![0.0, 3.0]],
        };
        assert_relative_eq!(f.eval(0.5, 0.5), 1.0);
        assert_relative_eq!(f.eval(1.0, 0.5), 2.0);
    }

    #[test]
    fn separable_norm_matches_quadrature() {
        let f = Field::Registry {
            name: FieldName::Section4D1,
            scale: 1.0,
        };
        let rule = CompositeRule::standard(1.0);
        let t = 0.37;
        let exact = f.l2_norm(t, 1.0, &rule);
        let quad = rule.integrate(|y| f.eval(y, t).powi(2)).sqrt();
        assert_relative_eq!(exact, quad, max_relative = 1e-13);
    }

    #[test]
    fn declared_bound_check() {
        let d = DisturbanceSet::section4();
        assert!(d.check_declared(0.1, 2.9, 0.9).is_ok());
        assert!(d.check_declared(0.1, 3.1, 0.0).is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let s = Scenario::by_name("synthetic").unwrap();
        let js = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&js).unwrap();
        assert_eq!(back.params, s.params);
        assert_eq!(back.disturbances.m1, s.disturbances.m1);
        assert_relative_eq!(
            back.disturbances.d3.eval(0.7),
            s.disturbances.d3.eval(0.7),
            epsilon = 0.0
        );
    }

    #[test]
    fn unknown_registry_name_is_a_parse_error() {
        let bad = r#"{"kind":"registry","name":"section4.d9"}"#;
        assert!(serde_json::from_str::<Signal>(bad).is_err());
    }
}
