//! Lyapunov certificate constants, structural feasibility checks, free
//! parameter selection, and verification of the exponential ISS/iISS
//! estimates on simulated trajectories.
//!
//! Free parameters are `ε1, ε2` and the Young weights `r1..r14`. The
//! augmented energy `𝓔 = E + ε1⟨φ,φ_t⟩ + ε2⟨w,w_t⟩` satisfies
//! `d𝓔/dt ≤ −μ_m(‖w_t‖² + ‖w_yy‖² + ‖φ_t‖² + ‖φ_y‖²) + Λ7` when the six
//! conditions checked by [`margins_17`] are positive.

use serde::{Deserialize, Serialize};

use crate::galerkin::{augmented_energy_unchecked, Basis};
use crate::model::{running_norms, DisturbanceSet, PhysicalParams};
use crate::timestepper::Trajectory;
use crate::{Error, Result};

/// `K_m = max{1/√a1, 1/√a2, l²/(2√a2), l⁴/(4√a1)}`.
pub fn compute_km(p: &PhysicalParams) -> f64 {
    let (sa1, sa2) = (p.a1.sqrt(), p.a2.sqrt());
    [
        1.0 / sa1,
        1.0 / sa2,
        p.l.powi(2) / (2.0 * sa2),
        p.l.powi(4) / (4.0 * sa1),
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}

fn s2l(l: f64) -> f64 {
    (2.0 * l).sqrt()
}

/// Outcome of the `ε0` construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Epsilon0 {
    pub numerator: f64,
    pub denominator: f64,
    /// `None` when the denominator is not positive.
    pub eps0: Option<f64>,
    /// `min{1/K_m, l√l, 1}`; `ε1` is taken in `(ε0, upper)`.
    pub upper: f64,
    pub feasible: bool,
}

/// `ε0 = ((c1+c2)l²/2) / (a2 − √(2l)M2 − l/2 − (l²/2)(c2 − p2 + q2))`.
pub fn compute_epsilon0(p: &PhysicalParams, m2: f64) -> Epsilon0 {
    let l = p.l;
    let numerator = (p.c1 + p.c2) * l * l / 2.0;
    let denominator = p.a2 - s2l(l) * m2 - l / 2.0 - l * l / 2.0 * (p.c2 - p.p2 + p.q2);
    let upper = (1.0 / compute_km(p)).min(l * l.sqrt()).min(1.0);
    let eps0 = (denominator > 0.0).then(|| numerator / denominator);
    Epsilon0 {
        numerator,
        denominator,
        eps0,
        upper,
        feasible: eps0.is_some_and(|e| e < upper),
    }
}

/// One strict inequality `lhs < rhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub margin: f64,
    pub holds: bool,
}

impl Condition {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin,
            holds: margin > 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub conditions: Vec<Condition>,
    pub feasible: bool,
    pub first_failure: Option<String>,
}

impl FeasibilityReport {
    fn from_conditions(conditions: Vec<Condition>) -> Self {
        let first_failure = conditions.iter().find(|c| !c.holds).map(|c| c.name.clone());
        Self {
            feasible: first_failure.is_none(),
            first_failure,
            conditions,
        }
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.conditions.iter().find(|c| c.name == name).map(|c| c.margin)
    }
}

/// Structural conditions (8a)–(8d) for tip bounds `M1`, `M2`.
pub fn check_assumptions_8(p: &PhysicalParams, m1: f64, m2: f64) -> FeasibilityReport {
    let l = p.l;
    let r = s2l(l);
    let km = compute_km(p);
    FeasibilityReport::from_conditions(vec![
        Condition::new("8a", l * l * r * m1, 2.0 * p.a1),
        Condition::new(
            "8b",
            r * (1.0 + l * l.sqrt()) * (1.0 + km) * (1.0 + p.c1 + p.c2 - p.p2 + p.q2 + m2),
            p.a2,
        ),
        Condition::new(
            "8c",
            l * l * r * (1.0 + l.powi(3)) * (p.c1 + p.p1 - p.q1 + p.q2 + m1),
            2.0 * p.b1,
        ),
        Condition::new(
            "8d",
            r * (1.0 + l.powi(3)) * (1.0 + p.p1 + p.c2 - p.p2 + p.q2 + m2),
            p.b2,
        ),
    ])
}

/// `ε1, ε2` and `r1..r14` (stored 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeParameters {
    pub eps1: f64,
    pub eps2: f64,
    pub r: [f64; 14],
}

impl FreeParameters {
    /// `r_k` with 1-based `k`.
    pub fn r(&self, k: usize) -> f64 {
        self.r[k - 1]
    }

    pub fn set_r(&mut self, k: usize, v: f64) {
        self.r[k - 1] = v;
    }

    pub fn eps_m(&self) -> f64 {
        self.eps1.max(self.eps2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) || self.r.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidInput(
                "free parameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Where the disturbance bounds came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSource {
    Declared,
    Empirical,
}

/// `M1 ≥ |d3|`, `M2 ≥ |d4|`, `D1 ≥ ‖d1‖`, `D2 ≥ ‖d2‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceBounds {
    pub m1: f64,
    pub m2: f64,
    pub d1: f64,
    pub d2: f64,
    pub m_source: BoundSource,
    /// Grid used for empirical suprema.
    pub horizon: f64,
    pub grid_dt: f64,
}

impl DisturbanceBounds {
    pub fn zero() -> Self {
        Self {
            m1: 0.0,
            m2: 0.0,
            d1: 0.0,
            d2: 0.0,
            m_source: BoundSource::Declared,
            horizon: 0.0,
            grid_dt: 0.0,
        }
    }

    /// Declared `M1, M2` when present, grid suprema over `[0, horizon]` otherwise;
    /// `D1, D2` are always grid suprema.
    pub fn from_set(d: &DisturbanceSet, horizon: f64, grid_dt: f64, l: f64) -> Result<Self> {
        let n = running_norms(d, horizon, grid_dt, l)?;
        let declared = d.m1.is_some() && d.m2.is_some();
        Ok(Self {
            m1: d.m1.unwrap_or(n.sup_d3),
            m2: d.m2.unwrap_or(n.sup_d4),
            d1: n.sup_l2_d1,
            d2: n.sup_l2_d2,
            m_source: if declared {
                BoundSource::Declared
            } else {
                BoundSource::Empirical
            },
            horizon,
            grid_dt,
        })
    }
}

/// `λ1..λ9` (0-based); `λ5`, `λ9` evaluated at `‖d1‖ = D1`, `‖d2‖ = D2`.
pub fn lambdas(p: &PhysicalParams, fp: &FreeParameters, d1: f64, d2: f64) -> [f64; 9] {
    let l = p.l;
    let (e1, e2) = (fp.eps1, fp.eps2);
    let r = |k| fp.r(k);
    let l1 = 0.5 * (p.c1 * r(1) + p.p1 * r(2) - 2.0 * p.q1 + r(7) - e2 * p.q1 * r(5));
    let l2 = e2 * l.powi(4) / 8.0 * (p.c1 * r(3) + p.p1 * r(4) - p.q1 / r(5) + r(8));
    let l3 = p.p1 / 2.0 * (1.0 / r(2) + e2 / r(4));
    let l4 = p.c1 * l * l / 4.0 * (1.0 / r(1) + e2 / r(3));
    let l5 = 0.5 * (1.0 / r(7) + e2 / r(8)) * d1 * d1;
    let l6 = p.q2 / 2.0 * (r(2) + e1 * r(1));
    let l7 = 0.5 * (p.c2 * r(6) - 2.0 * p.p2 + p.q2 / r(2) + r(9) - e1 * p.p2 * r(6));
    let l8 = l * l / 4.0
        * (p.c2 / r(6) + 2.0 * e1 * p.c2 - e1 * p.p2 / r(6) + e1 * p.q2 / r(1) + e1 * r(10));
    let l9 = 0.5 * (1.0 / r(9) + e1 / r(10)) * d2 * d2;
    [l1, l2, l3, l4, l5, l6, l7, l8, l9]
}

/// `Λ1..Λ7` (0-based) at instantaneous `|d3|`, `|d4|`; with `(M1, M2)` these
/// are the primed constants.
pub fn big_lambdas(p: &PhysicalParams, fp: &FreeParameters, lam: &[f64; 9], d3: f64, d4: f64) -> [f64; 7] {
    let l = p.l;
    let r = s2l(l);
    let (e1, e2) = (fp.eps1, fp.eps2);
    let (d3, d4) = (d3.abs(), d4.abs());
    [
        lam[0] + lam[5],
        e2 / (2.0 * fp.r(12)) + lam[1] + e2 * l * l / 2.0 * r * d3,
        lam[2] + lam[6],
        e1 / (2.0 * fp.r(11)) + lam[3] + lam[7] + e1 * r * d4,
        e1 / 2.0 * fp.r(11) + r * d4,
        e2 / 2.0 * fp.r(12) + l * l / 2.0 * r * d3,
        lam[4] + lam[8] + 2.0 * r * (d3 + d4),
    ]
}

/// Variant without bounded tip signals, using `r13`, `r14`.
pub fn big_lambdas_relaxed(p: &PhysicalParams, fp: &FreeParameters, lam: &[f64; 9], d3: f64, d4: f64) -> [f64; 7] {
    let l = p.l;
    let (e1, e2) = (fp.eps1, fp.eps2);
    let (r13, r14) = (fp.r(13), fp.r(14));
    [
        lam[0] + lam[5],
        e2 / (2.0 * fp.r(12)) + lam[1] + e2 * e2 * l.powi(3) * r13 / 2.0,
        lam[2] + lam[6],
        e1 / (2.0 * fp.r(11)) + lam[3] + lam[7] + l * r14 * e1 * e1,
        e1 / 2.0 * fp.r(11) + l * r14,
        e2 / 2.0 * fp.r(12) + l.powi(3) * r13 / 2.0,
        lam[4] + lam[8] + d3 * d3 / (2.0 * r13) + d4 * d4 / (2.0 * r14),
    ]
}

/// The λ's and Λ's at the disturbance bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LambdaSet {
    pub lambda: [f64; 9],
    /// `Λ1..Λ7` at `|d3| = M1`, `|d4| = M2` (the primed values; `Λ'1 = Λ1`, `Λ'3 = Λ3`).
    pub prime: [f64; 7],
    /// `Λ1..Λ7` with `d3 = d4 = 0`.
    pub unforced: [f64; 7],
}

pub fn lambda_constants(p: &PhysicalParams, fp: &FreeParameters, b: &DisturbanceBounds) -> LambdaSet {
    let lambda = lambdas(p, fp, b.d1, b.d2);
    LambdaSet {
        lambda,
        prime: big_lambdas(p, fp, &lambda, b.m1, b.m2),
        unforced: big_lambdas(p, fp, &lambda, 0.0, 0.0),
    }
}

pub const LABELS_17: [&str; 6] = ["17a", "17b", "17c", "17d", "17e", "17f"];

/// Margins (positive = holds) of
/// `Λ'5 < b2`, `Λ'6 < b1`, and the four terms inside `μ_m`:
/// `−ε2 − Λ1 − (4/l⁴)(Λ'6 − b1)`, `ε2 a1 − Λ'2`, `−ε1 − Λ3 − (2/l²)(Λ'5 − b2)`, `ε1 a2 − Λ'4`.
pub fn margins_17(p: &PhysicalParams, fp: &FreeParameters, big: &[f64; 7]) -> [f64; 6] {
    let l = p.l;
    [
        p.b2 - big[4],
        p.b1 - big[5],
        -fp.eps2 - big[0] - 4.0 / l.powi(4) * (big[5] - p.b1),
        fp.eps2 * p.a1 - big[1],
        -fp.eps1 - big[2] - 2.0 / l.powi(2) * (big[4] - p.b2),
        fp.eps1 * p.a2 - big[3],
    ]
}

/// `(17d)` and `(17f)` divided by `ε2`, `ε1`, so all six are `O(1)` as `ε → 0`.
fn normalized_margins(p: &PhysicalParams, fp: &FreeParameters, b: &DisturbanceBounds) -> [f64; 6] {
    let lam = lambdas(p, fp, b.d1, b.d2);
    let big = big_lambdas(p, fp, &lam, b.m1, b.m2);
    let mut m = margins_17(p, fp, &big);
    m[3] /= fp.eps2;
    m[5] /= fp.eps1;
    m
}

/// `μ_m` = minimum of the four decay terms.
pub fn compute_mu_m(p: &PhysicalParams, fp: &FreeParameters, big_prime: &[f64; 7]) -> f64 {
    let m = margins_17(p, fp, big_prime);
    m[2].min(m[3]).min(m[4]).min(m[5])
}

/// Conditions (15a)–(15d) with the relaxed constants.
pub fn check_assumptions_15(p: &PhysicalParams, fp: &FreeParameters) -> FeasibilityReport {
    let lam = lambdas(p, fp, 0.0, 0.0);
    let big = big_lambdas_relaxed(p, fp, &lam, 0.0, 0.0);
    let l = p.l;
    FeasibilityReport::from_conditions(vec![
        Condition::new("15a", fp.eps2 + big[0] + 4.0 / l.powi(4) * (big[5] - p.b1), 0.0),
        Condition::new("15b", big[1] - fp.eps2 * p.a1, 0.0),
        Condition::new("15c", fp.eps1 + big[2] + 2.0 / l.powi(2) * (big[4] - p.b2), 0.0),
        Condition::new("15d", big[3] - fp.eps1 * p.a2, 0.0),
    ])
}

/// `(+29)`, `(+30)`, `(+31)` at a given `ε1`.
pub fn eps1_conditions(p: &PhysicalParams, eps1: f64, m1: f64, m2: f64) -> [Condition; 3] {
    let l = p.l;
    let r = s2l(l);
    let r11 = 1.0 / l;
    [
        Condition::new(
            "+29",
            0.25 * (p.c1 + p.p1 - 4.0 * p.q1 + p.q2) * l.powi(4)
                + 0.25 * p.q2 * l.powi(4) * eps1
                + 2.0 * l * l * r * m1,
            4.0 * p.b1,
        ),
        Condition::new(
            "+30",
            l * l * (p.p1 + p.c2 / 4.0 - p.p2 + p.q2)
                + l * l * (1.0 - p.p2 / 4.0 + 1.0 / l.powi(3)) * eps1
                + 2.0 * r * m2,
            2.0 * p.b2,
        ),
        Condition::new(
            "+31",
            (p.c1 + p.c2) * l * l / 2.0
                + ((p.c2 - p.p2 + p.q2) * l * l / 2.0 + 1.0 / (2.0 * r11) + r * m2 - p.a2) * eps1,
            0.0,
        ),
    ]
}

/// Which way a parameter is pushed from its natural value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Small,
    Large,
    Fixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub parameter: String,
    pub direction: Direction,
    pub natural: f64,
    pub chosen: f64,
    pub bisection_steps: usize,
    /// Normalized (17a–f) margins after this choice, later parameters at their limits.
    pub margins: [f64; 6],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub fp: FreeParameters,
    pub eps0: Epsilon0,
    pub eps1_conditions: Vec<Condition>,
    /// Normalized margins with every tunable parameter at its limit.
    pub limit_margins: [f64; 6],
    pub final_margins: [f64; 6],
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Infeasible {
    /// First failing inequality, e.g. `"8b"` or `"17c"`.
    pub failing: String,
    pub reason: String,
    pub assumptions_8: FeasibilityReport,
}

/// Tuned parameters in order; each may use at most `0.95/N` of every limit margin.
const ORDER: [(&str, Direction); 9] = [
    ("r3", Direction::Small),
    ("r4", Direction::Small),
    ("r8", Direction::Small),
    ("r5", Direction::Large),
    ("r12", Direction::Large),
    ("eps2", Direction::Small),
    ("r10", Direction::Small),
    ("r9", Direction::Small),
    ("r7", Direction::Small),
];

const SMALL_LIMIT: f64 = 1e-30;
const LARGE_LIMIT: f64 = 1e30;
const EPS2_LIMIT: f64 = 1e-90;
const BUDGET: f64 = 0.95;

fn set_param(fp: &mut FreeParameters, name: &str, v: f64) {
    match name {
        "eps2" => fp.eps2 = v,
        other => {
            let k: usize = other[1..].parse().expect("r index");
            fp.set_r(k, v);
        }
    }
}

/// Constructs `ε1, ε2, r1..r12` satisfying (17a)–(17f) with a 5% safety
/// factor, then induces `r13 = √(2l)M1/l`, `r14 = √(2l)M2/l`.
pub fn select_free_parameters(
    p: &PhysicalParams,
    b: &DisturbanceBounds,
) -> std::result::Result<Selection, Infeasible> {
    let a8 = check_assumptions_8(p, b.m1, b.m2);
    let infeasible = |failing: &str, reason: String| Infeasible {
        failing: failing.into(),
        reason,
        assumptions_8: a8.clone(),
    };
    if let Err(e) = p.check_hard() {
        return Err(infeasible("params", e.to_string()));
    }
    if let Some(f) = &a8.first_failure {
        return Err(infeasible(f, format!("structural condition ({f}) violated")));
    }
    let e0 = compute_epsilon0(p, b.m2);
    let Some(eps0) = e0.eps0.filter(|_| e0.feasible) else {
        return Err(infeasible(
            "eps0",
            format!("empty interval for eps1 (eps0 = {:?}, upper = {})", e0.eps0, e0.upper),
        ));
    };
    let l = p.l;
    let km = compute_km(p);

    // ε1: balance the slacks of (+29), (+30), (+31) and a size term ε1/upper.
    let hi = e0.upper * (1.0 - 1e-9);
    let lo = if eps0 > 0.0 { eps0 * (1.0 + 1e-9) } else { hi * 1e-12 };
    let slack = |e1: f64| {
        let c = eps1_conditions(p, e1, b.m1, b.m2);
        let s29 = c[0].margin / c[0].rhs;
        let s30 = c[1].margin / c[1].rhs;
        let s31 = c[2].margin / (p.a2 * e1);
        s31.min(e1 / e0.upper) - s29.min(s30)
    };
    let eps1 = if lo >= hi {
        hi
    } else if slack(lo) >= 0.0 {
        lo
    } else if slack(hi) <= 0.0 {
        hi
    } else {
        let (mut a, mut z) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + z);
            if slack(m) < 0.0 {
                a = m;
            } else {
                z = m;
            }
        }
        0.5 * (a + z)
    };
    let eps1_conds = eps1_conditions(p, eps1, b.m1, b.m2).to_vec();

    let mut fp = FreeParameters {
        eps1,
        eps2: EPS2_LIMIT,
        r: [1.0; 14],
    };
    fp.set_r(1, 0.5);
    fp.set_r(2, 0.5);
    fp.set_r(6, 0.5);
    fp.set_r(11, 1.0 / l);
    for (name, dir) in ORDER {
        let v = if dir == Direction::Large { LARGE_LIMIT } else { SMALL_LIMIT };
        if name != "eps2" {
            set_param(&mut fp, name, v);
        }
    }
    let limit = normalized_margins(p, &fp, b);
    let mut trace = vec![
        TraceEntry {
            parameter: "r1=r2=r6".into(),
            direction: Direction::Fixed,
            natural: 0.5,
            chosen: 0.5,
            bisection_steps: 0,
            margins: limit,
        },
        TraceEntry {
            parameter: "r11".into(),
            direction: Direction::Fixed,
            natural: 1.0 / l,
            chosen: 1.0 / l,
            bisection_steps: 0,
            margins: limit,
        },
        TraceEntry {
            parameter: "eps1".into(),
            direction: Direction::Fixed,
            natural: eps1,
            chosen: eps1,
            bisection_steps: 200,
            margins: limit,
        },
    ];
    if let Some(k) = limit.iter().position(|m| !(*m > 0.0)) {
        return Err(infeasible(
            LABELS_17[k],
            format!(
                "({}) cannot hold even with every tunable parameter at its limit (margin {:.6e})",
                LABELS_17[k], limit[k]
            ),
        ));
    }

    let n = ORDER.len() as f64;
    for (step, (name, dir)) in ORDER.iter().enumerate() {
        let frac = 1.0 - BUDGET * (step + 1) as f64 / n;
        let ok = |fp: &FreeParameters| {
            let m = normalized_margins(p, fp, b);
            m.iter().zip(&limit).all(|(m, lim)| *m >= frac * lim)
        };
        let (natural, extreme) = match (*name, dir) {
            ("eps2", _) => (0.5 * (1.0 / km).min(1.0), EPS2_LIMIT),
            (_, Direction::Large) => (1.0, LARGE_LIMIT),
            _ => (1.0, SMALL_LIMIT),
        };
        let mut trial = fp;
        set_param(&mut trial, name, natural);
        let mut steps = 0;
        let chosen = if ok(&trial) {
            natural
        } else {
            set_param(&mut trial, name, extreme);
            if !ok(&trial) {
                let label = LABELS_17[normalized_margins(p, &trial, b)
                    .iter()
                    .zip(&limit)
                    .position(|(m, lim)| *m < frac * lim)
                    .unwrap_or(0)];
                return Err(infeasible(
                    label,
                    format!("no admissible value for {name} keeping ({label}) within budget"),
                ));
            }
            // Log-scale bisection between the admissible extreme and the natural value.
            let (mut good, mut bad) = (extreme.ln(), natural.ln());
            while (bad - good).abs() > 1e-3 && steps < 200 {
                let mid = 0.5 * (good + bad);
                set_param(&mut trial, name, mid.exp());
                if ok(&trial) {
                    good = mid;
                } else {
                    bad = mid;
                }
                steps += 1;
            }
            good.exp()
        };
        set_param(&mut fp, name, chosen);
        trace.push(TraceEntry {
            parameter: (*name).into(),
            direction: *dir,
            natural,
            chosen,
            bisection_steps: steps,
            margins: normalized_margins(p, &fp, b),
        });
    }

    let r13 = (s2l(l) * b.m1 / l).max(RELAXED_WEIGHT_FLOOR);
    let r14 = (s2l(l) * b.m2 / l).max(RELAXED_WEIGHT_FLOOR);
    fp.set_r(13, r13);
    fp.set_r(14, r14);

    let final_margins = normalized_margins(p, &fp, b);
    let lam = lambdas(p, &fp, b.d1, b.d2);
    let direct = margins_17(p, &fp, &big_lambdas(p, &fp, &lam, b.m1, b.m2));
    if let Some(k) = direct.iter().position(|m| !(*m > 0.0)) {
        return Err(infeasible(
            LABELS_17[k],
            format!("direct evaluation of ({}) gives margin {:.6e}", LABELS_17[k], direct[k]),
        ));
    }
    Ok(Selection {
        fp,
        eps0: e0,
        eps1_conditions: eps1_conds,
        limit_margins: limit,
        final_margins,
        trace,
    })
}

/// Lower bound on the induced `r13`, `r14` when `M1` or `M2` is zero.
pub const RELAXED_WEIGHT_FLOOR: f64 = 1e-8;

/// Gains and overshoot constants of the exponential estimates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Decay rate of `𝓔`.
    pub mu: f64,
    /// Coefficient multiplying the disturbance terms in `d𝓔/dt`.
    pub c1: f64,
    /// `2 C1 / μ`
    pub c2: f64,
    pub c3: f64,
    /// `C` of the sup-norm estimate: `√(2 C3)`.
    pub c_eiss: f64,
    pub c4: f64,
    pub c5: f64,
    /// `C` of the integral estimate: `√(2 C5)`.
    pub c_eiiss: f64,
}

fn bound_constants(mu: f64, c1: f64, km_eps: f64) -> BoundConstants {
    let c2 = 2.0 * c1 / mu;
    let sandwich = (1.0 + km_eps) / (1.0 - km_eps);
    let c3 = sandwich.max(c2 / (1.0 - km_eps));
    let c5 = sandwich.max(c1 / (1.0 - km_eps));
    BoundConstants {
        mu,
        c1,
        c2,
        c3,
        c_eiss: (2.0 * c3).sqrt(),
        c4: c1,
        c5,
        c_eiiss: (2.0 * c5).sqrt(),
    }
}

/// Relaxed-variant constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxedCertificate {
    pub r13: f64,
    pub r14: f64,
    pub big_lambda: [f64; 7],
    pub assumptions_15: FeasibilityReport,
    pub mu: f64,
    pub constants: Option<BoundConstants>,
}

/// Everything produced by the certificate pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub params: PhysicalParams,
    pub bounds: DisturbanceBounds,
    pub km: f64,
    pub assumptions_8: FeasibilityReport,
    pub eps0: Epsilon0,
    pub selection: Option<Selection>,
    pub infeasible: Option<Infeasible>,
    pub lambdas: Option<LambdaSet>,
    pub margins_17: Option<[f64; 6]>,
    pub mu_m: Option<f64>,
    /// `μ_m · min(1, 2/a1, 2/a2)`: the rate that follows without assuming `a1, a2 ≤ 2`.
    pub mu_conservative: Option<f64>,
    /// `(1/(1+K_m ε_m), 1/(1−K_m ε_m))`
    pub sandwich: Option<(f64, f64)>,
    pub constants: Option<BoundConstants>,
    pub relaxed: Option<RelaxedCertificate>,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        self.mu_m.is_some_and(|m| m > 0.0)
    }

    pub fn free_parameters(&self) -> Option<&FreeParameters> {
        self.selection.as_ref().map(|s| &s.fp)
    }
}

/// Runs the whole pipeline: (8), ε0, parameter selection, λ/Λ, μ_m,
/// constants, and the relaxed variant.
pub fn certify(p: &PhysicalParams, b: &DisturbanceBounds) -> Certificate {
    let km = compute_km(p);
    let mut cert = Certificate {
        params: *p,
        bounds: *b,
        km,
        assumptions_8: check_assumptions_8(p, b.m1, b.m2),
        eps0: compute_epsilon0(p, b.m2),
        selection: None,
        infeasible: None,
        lambdas: None,
        margins_17: None,
        mu_m: None,
        mu_conservative: None,
        sandwich: None,
        constants: None,
        relaxed: None,
    };
    match select_free_parameters(p, b) {
        Err(inf) => cert.infeasible = Some(inf),
        Ok(sel) => {
            let fp = sel.fp;
            let set = lambda_constants(p, &fp, b);
            let mu = compute_mu_m(p, &fp, &set.prime);
            let ke = km * fp.eps_m();
            let l = p.l;
            let c1 = [
                0.5 * (1.0 / fp.r(7) + fp.eps2 / fp.r(8)),
                0.5 * (1.0 / fp.r(9) + fp.eps1 / fp.r(10)),
                2.0 * s2l(l),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            cert.margins_17 = Some(margins_17(p, &fp, &set.prime));
            cert.mu_m = Some(mu);
            cert.mu_conservative = Some(mu * 1f64.min(2.0 / p.a1).min(2.0 / p.a2));
            cert.sandwich = Some((1.0 / (1.0 + ke), 1.0 / (1.0 - ke)));
            cert.constants = (mu > 0.0 && ke < 1.0).then(|| bound_constants(mu, c1, ke));

            let lam0 = lambdas(p, &fp, b.d1, b.d2);
            let big = big_lambdas_relaxed(p, &fp, &lam0, 0.0, 0.0);
            let a15 = check_assumptions_15(p, &fp);
            let m = margins_17(p, &fp, &big);
            let mu3 = m[2].min(m[3]).min(m[4]).min(m[5]);
            let c1_relaxed = [
                0.5 * (1.0 / fp.r(7) + fp.eps2 / fp.r(8)),
                0.5 * (1.0 / fp.r(9) + fp.eps1 / fp.r(10)),
                1.0 / (2.0 * fp.r(13)),
                1.0 / (2.0 * fp.r(14)),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            cert.relaxed = Some(RelaxedCertificate {
                r13: fp.r(13),
                r14: fp.r(14),
                big_lambda: big,
                assumptions_15: a15,
                mu: mu3,
                constants: (mu3 > 0.0 && ke < 1.0).then(|| bound_constants(mu3, c1_relaxed, ke)),
            });
            cert.lambdas = Some(set);
            cert.selection = Some(sel);
        }
    }
    cert
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    EissThm2,
    EiissThm2,
    EissThm3,
    EiissThm3,
    CorollarySup,
}

impl BoundKind {
    pub const ALL: [BoundKind; 5] = [
        BoundKind::EissThm2,
        BoundKind::EiissThm2,
        BoundKind::EissThm3,
        BoundKind::EiissThm3,
        BoundKind::CorollarySup,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BoundKind::EissThm2 => "EISS-Thm2",
            BoundKind::EiissThm2 => "EiISS-Thm2",
            BoundKind::EissThm3 => "EISS-Thm3",
            BoundKind::EiissThm3 => "EiISS-Thm3",
            BoundKind::CorollarySup => "Corollary-sup",
        }
    }
}

/// Per-sample comparison of a bound with the trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IssVerdict {
    pub kind: BoundKind,
    /// Constant used on the right-hand side.
    pub c_used: f64,
    /// Smallest constant for which the bound holds on this trajectory.
    pub c_min: f64,
    pub pass: bool,
    pub worst_time: f64,
    pub min_margin: f64,
    pub t: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub margin: Vec<f64>,
}

impl IssVerdict {
    fn from_series(kind: BoundKind, c_used: f64, t: Vec<f64>, lhs: Vec<f64>, unit: Vec<f64>) -> Self {
        let rhs: Vec<f64> = unit.iter().map(|u| c_used * u).collect();
        let margin: Vec<f64> = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
        let (mut worst, mut min_margin) = (0, f64::INFINITY);
        for (i, m) in margin.iter().enumerate() {
            if *m < min_margin {
                min_margin = *m;
                worst = i;
            }
        }
        let c_min = lhs
            .iter()
            .zip(&unit)
            .map(|(l, u)| {
                if *l <= 0.0 {
                    0.0
                } else if *u > 0.0 {
                    l / u
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        Self {
            kind,
            c_used,
            c_min,
            pass: margin.iter().all(|m| *m >= 0.0),
            worst_time: t.get(worst).copied().unwrap_or(0.0),
            min_margin: if margin.is_empty() { 0.0 } else { min_margin },
            t,
            lhs,
            rhs,
            margin,
        }
    }
}

/// Exponential factor of the norm form (`e^{−μt/4}`) or the energy form (`e^{−μt/2}`).
pub fn decay_factor(mu: f64, t: f64, energy_form: bool) -> f64 {
    if energy_form {
        (-mu * t / 2.0).exp()
    } else {
        (-mu * t / 4.0).exp()
    }
}

/// Checks `‖X(t)‖ ≤ C e^{−μt/4}‖X0‖ + C·gain(t)` at every sample, with `C`
/// from the proof chain of `cert`.
pub fn verify_iss_bound(traj: &Trajectory, cert: &Certificate, kind: BoundKind) -> Result<IssVerdict> {
    if kind == BoundKind::CorollarySup {
        return Ok(verify_corollary_bounds(traj, &cert.params));
    }
    let relaxed = matches!(kind, BoundKind::EissThm3 | BoundKind::EiissThm3);
    let (mu, consts) = if relaxed {
        let r = cert.relaxed.as_ref();
        (r.map_or(f64::NAN, |r| r.mu), r.and_then(|r| r.constants))
    } else {
        (cert.mu_m.unwrap_or(f64::NAN), cert.constants)
    };
    let Some(c) = consts.filter(|_| mu > 0.0) else {
        return Err(Error::NoCertificate(mu));
    };
    let x0 = (2.0 * traj.samples[0].energy).sqrt();
    let integral = matches!(kind, BoundKind::EiissThm2 | BoundKind::EiissThm3);
    let c_used = if integral { c.c_eiiss } else { c.c_eiss };
    let mut t = Vec::with_capacity(traj.samples.len());
    let mut lhs = Vec::with_capacity(traj.samples.len());
    let mut unit = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let n = &s.running;
        let gain = match kind {
            BoundKind::EissThm2 => n.sup_l2_d1 + n.sup_l2_d2 + n.sup_d3.sqrt() + n.sup_d4.sqrt(),
            BoundKind::EissThm3 => n.sup_l2_d1 + n.sup_l2_d2 + n.sup_d3 + n.sup_d4,
            BoundKind::EiissThm2 => {
                n.int_sq_d1.sqrt() + n.int_sq_d2.sqrt() + n.int_abs_d3.sqrt() + n.int_abs_d4.sqrt()
            }
            BoundKind::EiissThm3 => {
                n.int_sq_d1.sqrt() + n.int_sq_d2.sqrt() + n.int_sq_d3.sqrt() + n.int_sq_d4.sqrt()
            }
            BoundKind::CorollarySup => unreachable!(),
        };
        t.push(s.t);
        lhs.push((2.0 * s.energy).max(0.0).sqrt());
        unit.push(decay_factor(mu, s.t, false) * x0 + gain);
    }
    Ok(IssVerdict::from_series(kind, c_used, t, lhs, unit))
}

/// `sup|φ|² ≤ (4l/a2)E`, `sup|w_y|² ≤ (l²/a1)E`, `sup|w|² ≤ (2l³/a1)E` at
/// every sample; the reported series is the tightest of the three ratios.
pub fn verify_corollary_bounds(traj: &Trajectory, p: &PhysicalParams) -> IssVerdict {
    let mut t = Vec::new();
    let mut lhs = Vec::new();
    let mut unit = Vec::new();
    for s in &traj.samples {
        let [(l1, u1), (l2, u2), (l3, u3)] = corollary_pairs(p, s.energy, s.norms.sup_phi, s.norms.sup_wy, s.norms.sup_w);
        // Keep the pair with the largest lhs/rhs ratio.
        let pick = [(l1, u1), (l2, u2), (l3, u3)]
            .into_iter()
            .max_by(|a, b| ratio(*a).total_cmp(&ratio(*b)))
            .expect("three pairs");
        t.push(s.t);
        lhs.push(pick.0);
        unit.push(pick.1);
    }
    IssVerdict::from_series(BoundKind::CorollarySup, 1.0, t, lhs, unit)
}

fn ratio((l, u): (f64, f64)) -> f64 {
    if l <= 0.0 {
        0.0
    } else if u > 0.0 {
        l / u
    } else {
        f64::INFINITY
    }
}

/// `(lhs, rhs)` of the three pointwise bounds.
pub fn corollary_pairs(p: &PhysicalParams, e: f64, sup_phi: f64, sup_wy: f64, sup_w: f64) -> [(f64, f64); 3] {
    let l = p.l;
    [
        (sup_phi * sup_phi, 4.0 * l / p.a2 * e),
        (sup_wy * sup_wy, l * l / p.a1 * e),
        (sup_w * sup_w, 2.0 * l.powi(3) / p.a1 * e),
    ]
}

/// Discrete check of `d𝓔/dt ≤ −(μ/2)𝓔 + C1(‖d1‖² + ‖d2‖² + |d3| + |d4|)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DissipationReport {
    pub samples_checked: usize,
    pub violations: usize,
    /// Largest `lhs − rhs − slack`.
    pub worst_excess: f64,
    pub worst_time: f64,
    pub pass: bool,
}

/// Centered difference of `𝓔` against the dissipation inequality at every
/// interior sample; the slack is the local truncation estimate
/// `(Δt²/6)|Δ³𝓔|/Δt³`. Requires stride 1 and stored states.
pub fn check_dissipation(traj: &Trajectory, cert: &Certificate, basis: &Basis) -> Result<DissipationReport> {
    let stride = traj.meta.config.record_stride;
    if stride != 1 {
        return Err(Error::StrideNotOne(stride));
    }
    if traj.states.len() != traj.samples.len() {
        return Err(Error::InvalidInput("trajectory was recorded without states".into()));
    }
    let (Some(fp), Some(c), Some(mu)) = (cert.free_parameters(), cert.constants, cert.mu_m) else {
        return Err(Error::NoCertificate(cert.mu_m.unwrap_or(f64::NAN)));
    };
    let p = &cert.params;
    let aug: Vec<f64> = traj
        .states
        .iter()
        .map(|s| augmented_energy_unchecked(s, p, basis, fp.eps1, fp.eps2))
        .collect();
    let n = aug.len();
    let dt = traj.meta.config.dt;
    let third = |k: usize| -> f64 {
        // Δ³ over k−1..k+2 where available.
        if k >= 1 && k + 2 < n {
            (aug[k + 2] - 3.0 * aug[k + 1] + 3.0 * aug[k] - aug[k - 1]).abs()
        } else {
            0.0
        }
    };
    let scale = aug.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut rep = DissipationReport {
        samples_checked: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_time: 0.0,
        pass: true,
    };
    for k in 1..n.saturating_sub(1) {
        let s = &traj.samples[k];
        let lhs = (aug[k + 1] - aug[k - 1]) / (2.0 * dt);
        let g = s.d1_l2.powi(2) + s.d2_l2.powi(2) + s.d3.abs() + s.d4.abs();
        let rhs = -mu / 2.0 * aug[k] + c.c1 * g;
        let local = (k.saturating_sub(2)..=k + 1).map(third).fold(0.0, f64::max);
        let slack = local / (6.0 * dt) + 1e-12 * scale;
        let excess = lhs - rhs - slack;
        rep.samples_checked += 1;
        if excess > rep.worst_excess {
            rep.worst_excess = excess;
            rep.worst_time = s.t;
        }
        if excess > 0.0 {
            rep.violations += 1;
        }
    }
    rep.pass = rep.violations == 0;
    Ok(rep)
}

/// Sandwich check `𝓔/(1+K_mε_m) ≤ E ≤ 𝓔/(1−K_mε_m)` on one state.
pub fn sandwich_holds(e: f64, aug: f64, km: f64, eps_m: f64) -> bool {
    let tol = 1e-12 * e.abs().max(1e-300);
    aug / (1.0 + km * eps_m) <= e + tol && e <= aug / (1.0 - km * eps_m) + tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> PhysicalParams {
        PhysicalParams {
            a1: 1.0,
            a2: 1.0,
            l: 1.0,
            ..PhysicalParams::synthetic()
        }
    }

    #[test]
    fn km_examples() {
        assert_relative_eq!(compute_km(&unit()), 1.0);
        assert_relative_eq!(compute_km(&PhysicalParams::section4()), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        let p = PhysicalParams { l: 2.0, ..unit() };
        assert_relative_eq!(compute_km(&p), 4.0);
    }

    #[test]
    fn eps0_examples() {
        let mut p = PhysicalParams::synthetic_uncoupled();
        assert_eq!(compute_epsilon0(&p, 0.0).eps0, Some(0.0));
        p.c1 = 0.1;
        p.c2 = 0.1;
        let e = compute_epsilon0(&p, 0.0);
        assert_relative_eq!(e.eps0.unwrap(), 0.1 / 19.45, epsilon = 1e-15);
        p.a2 = 0.4;
        assert!(compute_epsilon0(&p, 0.0).eps0.is_none());
    }

    #[test]
    fn assumptions_8_examples() {
        let syn = check_assumptions_8(&PhysicalParams::synthetic_uncoupled(), 0.0, 0.0);
        assert!(syn.feasible);
        let km = compute_km(&PhysicalParams::synthetic_uncoupled());
        assert_relative_eq!(syn.margin("8b").unwrap(), 20.0 - 2.0 * 2f64.sqrt() * (1.0 + km), epsilon = 1e-12);
        let s4 = check_assumptions_8(&PhysicalParams::section4(), 3.0, 1.0);
        assert!(!s4.feasible);
        let b = &s4.conditions[1];
        assert!(!b.holds);
        assert!((b.lhs - 9.55).abs() < 0.01, "lhs = {}", b.lhs);
    }

    #[test]
    fn lambda_reduction_without_couplings() {
        let p = PhysicalParams::synthetic_uncoupled();
        let fp = FreeParameters {
            eps1: 0.1,
            eps2: 0.2,
            r: [0.7; 14],
        };
        let lam = lambdas(&p, &fp, 0.0, 0.0);
        assert_eq!(lam[2], 0.0);
        assert_eq!(lam[3], 0.0);
        assert_eq!(lam[4], 0.0);
        assert_eq!(lam[8], 0.0);
        assert_relative_eq!(lam[0], 0.35);
        let big = big_lambdas(&p, &fp, &lam, 0.0, 0.0);
        assert_eq!(big[0], lam[0] + lam[5]);
        assert_eq!(big[2], lam[2] + lam[6]);
        assert_eq!(big[6], lam[4] + lam[8]);
    }

    #[test]
    fn synthetic_selection_is_feasible() {
        let p = PhysicalParams::synthetic_uncoupled();
        let sel = select_free_parameters(&p, &DisturbanceBounds::zero()).unwrap();
        assert_eq!(sel.fp.r(11), 1.0);
        assert!(sel.final_margins.iter().all(|m| *m > 0.0));
        for (f, l) in sel.final_margins.iter().zip(&sel.limit_margins) {
            assert!(*f >= 0.05 * l * (1.0 - 1e-9));
        }
        let cert = certify(&p, &DisturbanceBounds::zero());
        assert!(cert.mu_m.unwrap() > 0.0);
    }

    #[test]
    fn section4_is_infeasible_at_8b() {
        let b = DisturbanceBounds {
            m1: 3.0,
            m2: 1.0,
            ..DisturbanceBounds::zero()
        };
        let err = select_free_parameters(&PhysicalParams::section4(), &b).unwrap_err();
        assert_eq!(err.failing, "8b");
    }

    #[test]
    fn relaxed_weights_dominate_induced_choice() {
        let p = PhysicalParams::synthetic();
        let b = DisturbanceBounds {
            m1: 0.9,
            m2: 0.3,
            d1: 1.0,
            d2: 0.1,
            ..DisturbanceBounds::zero()
        };
        let cert = certify(&p, &b);
        let m17 = cert.margins_17.unwrap();
        let rel = cert.relaxed.unwrap();
        assert!(rel.assumptions_15.feasible);
        let m15: Vec<f64> = rel.assumptions_15.conditions.iter().map(|c| c.margin).collect();
        for k in 0..4 {
            assert!(m15[k] >= m17[k + 2] - 1e-12);
        }
    }

    #[test]
    fn b1_zero_breaks_15a() {
        let mut fp = FreeParameters {
            eps1: 0.1,
            eps2: 0.1,
            r: [1.0; 14],
        };
        fp.set_r(11, 1.0);
        let p = PhysicalParams {
            b1: 0.0,
            ..PhysicalParams::synthetic_uncoupled()
        };
        let rep = check_assumptions_15(&p, &fp);
        assert_eq!(rep.first_failure.as_deref(), Some("15a"));
    }

    #[test]
    fn sandwich_helper() {
        assert!(sandwich_holds(1.0, 1.0, 0.5, 0.1));
        assert!(!sandwich_holds(1.0, 2.0, 0.5, 0.1));
    }
}
