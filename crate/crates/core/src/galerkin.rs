//! Galerkin bases, operator assembly and exact norm evaluation.
//!
//! The beam family satisfies `v(0) = v'(0) = 0`, the string family `ψ(0) = 0`;
//! the tip conditions are natural and enter only through the load vectors.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::model::{Field, FeedbackGains, InitialCondition, PhysicalParams, Profile};
use crate::poly::Polynomial;
use crate::quadrature::CompositeRule;
use crate::{Error, Result};

/// Default number of points in the sup-norm grid.
pub const DEFAULT_SUP_GRID: usize = 2049;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Clamped-free beam eigenfunctions and shifted sine string modes.
    #[default]
    Modal,
    /// Monomials `(y/l)^{i+1}` for the beam and `(y/l)^j` for the string.
    Polynomial,
}

/// Wavenumbers `L_i` solving `cos L cosh L = −1`, written as
/// `cos L + sech L = 0` to avoid overflow.
pub fn clamped_free_wavenumbers(n: usize) -> Vec<f64> {
    let f = |x: f64| x.cos() + 1.0 / x.cosh();
    (1..=n)
        .map(|i| {
            let mut lo = (i - 1) as f64 * std::f64::consts::PI;
            let mut hi = i as f64 * std::f64::consts::PI;
            let flo = f(lo);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (f(mid) > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

/// One clamped-free mode `cosh x − cos x − σ(sinh x − sin x)`, `x = βy`,
/// evaluated without forming `cosh` or `sinh` of large arguments.
#[derive(Debug, Clone, Copy)]
struct BeamMode {
    wavenumber: f64,
    beta: f64,
    sigma: f64,
    /// `2(−e^{−L} + sin L − cos L) / S` where `(1 − σ) e^x = coef · e^{x−L}`.
    coef: f64,
    scale: f64,
}

impl BeamMode {
    fn new(wavenumber: f64, l: f64) -> Self {
        let big_l = wavenumber;
        let e = (-big_l).exp();
        let s = 1.0 - e * e + 2.0 * e * big_l.sin();
        let coef = 2.0 * (-e + big_l.sin() - big_l.cos()) / s;
        let one_minus_sigma = coef * e;
        Self {
            wavenumber,
            beta: wavenumber / l,
            sigma: 1.0 - one_minus_sigma,
            coef,
            scale: 1.0,
        }
    }

    /// `k`-th derivative, `k ≤ 3`.
    fn eval(&self, y: f64, k: usize) -> f64 {
        let x = self.beta * y;
        let a = self.coef * (x - self.wavenumber).exp();
        let b = (1.0 + self.sigma) * (-x).exp();
        let (s, c) = x.sin_cos();
        let sg = self.sigma;
        let raw = match k {
            0 => 0.5 * (a + b) - c + sg * s,
            1 => 0.5 * (a - b) + s + sg * c,
            2 => 0.5 * (a + b) + c - sg * s,
            3 => 0.5 * (a - b) - s - sg * c,
            _ => panic!("beam mode derivative order {k} not supported"),
        };
        self.scale * self.beta.powi(k as i32) * raw
    }
}

/// Shape functions, Gram matrices, trace vectors and evaluation tables.
#[derive(Debug, Clone)]
pub struct Basis {
    pub kind: BasisKind,
    pub n_w: usize,
    pub n_phi: usize,
    pub l: f64,
    beam_modes: Vec<BeamMode>,
    beam_polys: Vec<Polynomial>,
    string_polys: Vec<Polynomial>,
    pub rule: CompositeRule,
    /// `∫ v_i v_k`
    pub g0_w: DMatrix<f64>,
    /// `∫ v_i' v_k'`
    pub g1_w: DMatrix<f64>,
    /// `∫ v_i'' v_k''`
    pub g2_w: DMatrix<f64>,
    /// `∫ ψ_j ψ_k`
    pub g0_phi: DMatrix<f64>,
    /// `∫ ψ_j' ψ_k'`
    pub g1_phi: DMatrix<f64>,
    /// `X_ij = ∫ v_i ψ_j`
    pub cross: DMatrix<f64>,
    pub v_l: DVector<f64>,
    pub dv_l: DVector<f64>,
    pub psi_l: DVector<f64>,
    /// Shape functions at the quadrature nodes (rows = nodes).
    nodes_v: DMatrix<f64>,
    nodes_psi: DMatrix<f64>,
    pub sup_grid: Vec<f64>,
    grid_v: DMatrix<f64>,
    grid_dv: DMatrix<f64>,
    grid_psi: DMatrix<f64>,
}

impl Basis {
    /// Modal basis with the default sup grid.
    pub fn build(n_w: usize, n_phi: usize, l: f64) -> Result<Self> {
        Self::build_with(BasisKind::Modal, n_w, n_phi, l, DEFAULT_SUP_GRID)
    }

    pub fn build_with(
        kind: BasisKind,
        n_w: usize,
        n_phi: usize,
        l: f64,
        sup_grid_points: usize,
    ) -> Result<Self> {
        if n_w == 0 || n_phi == 0 {
            return Err(Error::InvalidInput(format!(
                "mode counts must be >= 1 (got n_w = {n_w}, n_phi = {n_phi})"
            )));
        }
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidInput(format!("span length must be > 0 (got {l})")));
        }
        if sup_grid_points < 2 {
            return Err(Error::InvalidInput("sup grid needs at least 2 points".into()));
        }
        let rule = CompositeRule::standard(l);
        let mut basis = Basis {
            kind,
            n_w,
            n_phi,
            l,
            beam_modes: Vec::new(),
            beam_polys: Vec::new(),
            string_polys: Vec::new(),
            rule,
            g0_w: DMatrix::zeros(0, 0),
            g1_w: DMatrix::zeros(0, 0),
            g2_w: DMatrix::zeros(0, 0),
            g0_phi: DMatrix::zeros(0, 0),
            g1_phi: DMatrix::zeros(0, 0),
            cross: DMatrix::zeros(0, 0),
            v_l: DVector::zeros(n_w),
            dv_l: DVector::zeros(n_w),
            psi_l: DVector::zeros(n_phi),
            nodes_v: DMatrix::zeros(0, 0),
            nodes_psi: DMatrix::zeros(0, 0),
            sup_grid: Vec::new(),
            grid_v: DMatrix::zeros(0, 0),
            grid_dv: DMatrix::zeros(0, 0),
            grid_psi: DMatrix::zeros(0, 0),
        };
        match kind {
            BasisKind::Modal => {
                let mut modes: Vec<BeamMode> = clamped_free_wavenumbers(n_w)
                    .into_iter()
                    .map(|k| BeamMode::new(k, l))
                    .collect();
                for m in &mut modes {
                    let norm2 = basis.rule.integrate(|y| m.eval(y, 0).powi(2));
                    m.scale = 1.0 / norm2.sqrt();
                }
                basis.beam_modes = modes;
            }
            BasisKind::Polynomial => {
                basis.beam_polys = (1..=n_w)
                    .map(|i| Polynomial::monomial(i + 1, l.powi(-(i as i32 + 1))))
                    .collect();
                basis.string_polys = (1..=n_phi)
                    .map(|j| Polynomial::monomial(j, l.powi(-(j as i32))))
                    .collect();
            }
        }

        let nq = basis.rule.len();
        let mut nv = [
            DMatrix::zeros(nq, n_w),
            DMatrix::zeros(nq, n_w),
            DMatrix::zeros(nq, n_w),
        ];
        let mut npsi = [DMatrix::zeros(nq, n_phi), DMatrix::zeros(nq, n_phi)];
        for (r, &y) in basis.rule.nodes.iter().enumerate() {
            for i in 0..n_w {
                for (k, m) in nv.iter_mut().enumerate() {
                    m[(r, i)] = basis.beam(i, y, k);
                }
            }
            for j in 0..n_phi {
                for (k, m) in npsi.iter_mut().enumerate() {
                    m[(r, j)] = basis.string(j, y, k);
                }
            }
        }
        let w = DVector::from_column_slice(&basis.rule.weights);
        let gram = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> DMatrix<f64> {
            let mut wb = b.clone();
            for (r, mut row) in wb.row_iter_mut().enumerate() {
                row *= w[r];
            }
            let g = a.transpose() * wb;
            if a.ncols() == b.ncols() {
                (&g + g.transpose()) * 0.5
            } else {
                g
            }
        };
        match kind {
            BasisKind::Modal => {
                basis.g0_w = gram(&nv[0], &nv[0]);
                basis.g1_w = gram(&nv[1], &nv[1]);
                basis.g2_w = gram(&nv[2], &nv[2]);
                basis.g0_phi = gram(&npsi[0], &npsi[0]);
                basis.g1_phi = gram(&npsi[1], &npsi[1]);
                basis.cross = gram(&nv[0], &npsi[0]);
            }
            BasisKind::Polynomial => {
                let exact = |a: &[Polynomial], b: &[Polynomial], k: usize| {
                    DMatrix::from_fn(a.len(), b.len(), |i, j| {
                        a[i].nth_derivative(k)
                            .mul(&b[j].nth_derivative(k))
                            .integrate(0.0, l)
                    })
                };
                basis.g0_w = exact(&basis.beam_polys, &basis.beam_polys, 0);
                basis.g1_w = exact(&basis.beam_polys, &basis.beam_polys, 1);
                basis.g2_w = exact(&basis.beam_polys, &basis.beam_polys, 2);
                basis.g0_phi = exact(&basis.string_polys, &basis.string_polys, 0);
                basis.g1_phi = exact(&basis.string_polys, &basis.string_polys, 1);
                basis.cross = DMatrix::from_fn(n_w, n_phi, |i, j| {
                    basis.beam_polys[i].mul(&basis.string_polys[j]).integrate(0.0, l)
                });
            }
        }
        let [v0, _, _] = nv;
        let [p0, _] = npsi;
        basis.nodes_v = v0;
        basis.nodes_psi = p0;

        for i in 0..n_w {
            basis.v_l[i] = basis.beam(i, l, 0);
            basis.dv_l[i] = basis.beam(i, l, 1);
        }
        for j in 0..n_phi {
            basis.psi_l[j] = basis.string(j, l, 0);
        }

        let ng = sup_grid_points;
        basis.sup_grid = (0..ng).map(|k| l * k as f64 / (ng - 1) as f64).collect();
        basis.grid_v = DMatrix::from_fn(ng, n_w, |r, i| basis.beam(i, basis.sup_grid[r], 0));
        basis.grid_dv = DMatrix::from_fn(ng, n_w, |r, i| basis.beam(i, basis.sup_grid[r], 1));
        basis.grid_psi =
            DMatrix::from_fn(ng, n_phi, |r, j| basis.string(j, basis.sup_grid[r], 0));

        for (name, g) in [
            ("beam mass Gram", &basis.g0_w),
            ("beam bending Gram", &basis.g2_w),
            ("string mass Gram", &basis.g0_phi),
            ("string stiffness Gram", &basis.g1_phi),
        ] {
            if g.clone().cholesky().is_none() {
                return Err(Error::Singular {
                    context: name.to_string(),
                });
            }
        }
        Ok(basis)
    }

    /// `k`-th derivative of the `i`-th beam shape function (0-based), `k ≤ 3`.
    pub fn beam(&self, i: usize, y: f64, k: usize) -> f64 {
        match self.kind {
            BasisKind::Modal => self.beam_modes[i].eval(y, k),
            BasisKind::Polynomial => self.beam_polys[i].nth_derivative(k).eval(y),
        }
    }

    /// `k`-th derivative of the `j`-th string shape function (0-based).
    pub fn string(&self, j: usize, y: f64, k: usize) -> f64 {
        match self.kind {
            BasisKind::Modal => {
                let kappa = (j as f64 + 0.5) * std::f64::consts::PI / self.l;
                let (s, c) = (kappa * y).sin_cos();
                let v = match k % 4 {
                    0 => s,
                    1 => c,
                    2 => -s,
                    _ => -c,
                };
                kappa.powi(k as i32) * v
            }
            BasisKind::Polynomial => self.string_polys[j].nth_derivative(k).eval(y),
        }
    }

    /// Clamped-free wavenumbers of the beam family (empty for polynomial bases).
    pub fn beam_wavenumbers(&self) -> Vec<f64> {
        self.beam_modes.iter().map(|m| m.wavenumber).collect()
    }

    pub fn dim(&self) -> usize {
        self.n_w + self.n_phi
    }

    pub fn eval_w(&self, q: &DVector<f64>, y: f64, k: usize) -> f64 {
        (0..self.n_w).map(|i| q[i] * self.beam(i, y, k)).sum()
    }

    pub fn eval_phi(&self, q: &DVector<f64>, y: f64, k: usize) -> f64 {
        (0..self.n_phi).map(|j| q[j] * self.string(j, y, k)).sum()
    }

    /// `[∫ f v_i]`, `[∫ g ψ_j]` by the composite rule.
    pub fn project_loads(&self, f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> (DVector<f64>, DVector<f64>) {
        let fw = DVector::from_iterator(
            self.rule.len(),
            self.rule.nodes.iter().zip(&self.rule.weights).map(|(&y, &w)| w * f(y)),
        );
        let gw = DVector::from_iterator(
            self.rule.len(),
            self.rule.nodes.iter().zip(&self.rule.weights).map(|(&y, &w)| w * g(y)),
        );
        (self.nodes_v.tr_mul(&fw), self.nodes_psi.tr_mul(&gw))
    }

    fn project_polynomial(&self, p: &Polynomial, beam: bool) -> DVector<f64> {
        match self.kind {
            BasisKind::Polynomial => {
                let fam = if beam { &self.beam_polys } else { &self.string_polys };
                DVector::from_iterator(fam.len(), fam.iter().map(|b| b.mul(p).integrate(0.0, self.l)))
            }
            BasisKind::Modal => {
                let (a, b) = self.project_loads(|y| p.eval(y), |y| p.eval(y));
                if beam {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Coefficient vectors for `(w, w_t, φ, φ_t)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiDiscreteState {
    pub t: f64,
    pub qw: DVector<f64>,
    pub qw_dot: DVector<f64>,
    pub qphi: DVector<f64>,
    pub qphi_dot: DVector<f64>,
}

impl SemiDiscreteState {
    pub fn zeros(basis: &Basis) -> Self {
        Self {
            t: 0.0,
            qw: DVector::zeros(basis.n_w),
            qw_dot: DVector::zeros(basis.n_w),
            qphi: DVector::zeros(basis.n_phi),
            qphi_dot: DVector::zeros(basis.n_phi),
        }
    }

    /// Stacked displacement `[q_w; q_φ]`.
    pub fn displacement(&self) -> DVector<f64> {
        stack(&self.qw, &self.qphi)
    }

    /// Stacked velocity `[q̇_w; q̇_φ]`.
    pub fn velocity(&self) -> DVector<f64> {
        stack(&self.qw_dot, &self.qphi_dot)
    }

    pub fn from_stacked(t: f64, n_w: usize, q: &DVector<f64>, v: &DVector<f64>) -> Self {
        let n_phi = q.len() - n_w;
        Self {
            t,
            qw: q.rows(0, n_w).into_owned(),
            qw_dot: v.rows(0, n_w).into_owned(),
            qphi: q.rows(n_w, n_phi).into_owned(),
            qphi_dot: v.rows(n_w, n_phi).into_owned(),
        }
    }

    pub fn check_dims(&self, basis: &Basis) -> Result<()> {
        for (what, len, expected) in [
            ("q_w", self.qw.len(), basis.n_w),
            ("q_w dot", self.qw_dot.len(), basis.n_w),
            ("q_phi", self.qphi.len(), basis.n_phi),
            ("q_phi dot", self.qphi_dot.len(), basis.n_phi),
        ] {
            if len != expected {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    got: len,
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

fn quad_form(g: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(g * b))
}

fn norm_from(g: &DMatrix<f64>, q: &DVector<f64>) -> f64 {
    quad_form(g, q, q).max(0.0).sqrt()
}

/// Every norm and trace used by the energy functionals and the sup bounds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub wt: f64,
    pub wyy: f64,
    pub phit: f64,
    pub phiy: f64,
    pub wtyy: f64,
    pub phity: f64,
    pub wy: f64,
    pub w: f64,
    pub phi: f64,
    pub w_l: f64,
    pub wt_l: f64,
    pub phi_l: f64,
    pub phit_l: f64,
    pub sup_w: f64,
    pub sup_wy: f64,
    pub sup_phi: f64,
}

/// Gram-matrix norms, tip traces, and grid sup norms.
pub fn field_norms(s: &SemiDiscreteState, basis: &Basis) -> FieldNorms {
    let mut n = field_norms_without_sup(s, basis);
    let sup = |m: &DMatrix<f64>, q: &DVector<f64>| (m * q).amax();
    n.sup_w = sup(&basis.grid_v, &s.qw);
    n.sup_wy = sup(&basis.grid_dv, &s.qw);
    n.sup_phi = sup(&basis.grid_psi, &s.qphi);
    n
}

/// As [`field_norms`] with the three sup norms left at zero.
pub fn field_norms_without_sup(s: &SemiDiscreteState, basis: &Basis) -> FieldNorms {
    FieldNorms {
        wt: norm_from(&basis.g0_w, &s.qw_dot),
        wyy: norm_from(&basis.g2_w, &s.qw),
        phit: norm_from(&basis.g0_phi, &s.qphi_dot),
        phiy: norm_from(&basis.g1_phi, &s.qphi),
        wtyy: norm_from(&basis.g2_w, &s.qw_dot),
        phity: norm_from(&basis.g1_phi, &s.qphi_dot),
        wy: norm_from(&basis.g1_w, &s.qw),
        w: norm_from(&basis.g0_w, &s.qw),
        phi: norm_from(&basis.g0_phi, &s.qphi),
        w_l: basis.v_l.dot(&s.qw),
        wt_l: basis.v_l.dot(&s.qw_dot),
        phi_l: basis.psi_l.dot(&s.qphi),
        phit_l: basis.psi_l.dot(&s.qphi_dot),
        sup_w: 0.0,
        sup_wy: 0.0,
        sup_phi: 0.0,
    }
}

/// `E = ½(‖w_t‖² + a1‖w_yy‖² + ‖φ_t‖² + a2‖φ_y‖²)`.
pub fn energy(s: &SemiDiscreteState, p: &PhysicalParams, basis: &Basis) -> f64 {
    0.5 * (quad_form(&basis.g0_w, &s.qw_dot, &s.qw_dot)
        + p.a1 * quad_form(&basis.g2_w, &s.qw, &s.qw)
        + quad_form(&basis.g0_phi, &s.qphi_dot, &s.qphi_dot)
        + p.a2 * quad_form(&basis.g1_phi, &s.qphi, &s.qphi))
}

/// `⟨w, w_t⟩` and `⟨φ, φ_t⟩`.
pub fn cross_products(s: &SemiDiscreteState, basis: &Basis) -> (f64, f64) {
    (
        quad_form(&basis.g0_w, &s.qw, &s.qw_dot),
        quad_form(&basis.g0_phi, &s.qphi, &s.qphi_dot),
    )
}

/// `𝓔 = E + ε1⟨φ, φ_t⟩ + ε2⟨w, w_t⟩`.
pub fn augmented_energy(
    s: &SemiDiscreteState,
    p: &PhysicalParams,
    basis: &Basis,
    eps1: f64,
    eps2: f64,
) -> Result<f64> {
    for (name, e) in [("eps1", eps1), ("eps2", eps2)] {
        if !(0.0..1.0).contains(&e) {
            return Err(Error::InvalidInput(format!("{name} = {e} outside [0, 1)")));
        }
    }
    Ok(augmented_energy_unchecked(s, p, basis, eps1, eps2))
}

pub(crate) fn augmented_energy_unchecked(
    s: &SemiDiscreteState,
    p: &PhysicalParams,
    basis: &Basis,
    eps1: f64,
    eps2: f64,
) -> f64 {
    let (ww, pp) = cross_products(s, basis);
    energy(s, p, basis) + eps1 * pp + eps2 * ww
}

/// L²-projection of the initial profiles with reconstruction errors.
#[derive(Debug, Clone)]
pub struct Projection {
    pub state: SemiDiscreteState,
    /// `‖f − Πf‖` for `w0, w1, φ0, φ1`.
    pub residuals: [f64; 4],
}

pub fn project_ic(ic: &InitialCondition, basis: &Basis) -> Result<Projection> {
    ic.check_essential_bcs()?;
    let chol_w = basis.g0_w.clone().cholesky().ok_or_else(|| Error::Singular {
        context: "beam mass Gram".into(),
    })?;
    let chol_p = basis.g0_phi.clone().cholesky().ok_or_else(|| Error::Singular {
        context: "string mass Gram".into(),
    })?;
    let project = |prof: &Profile, beam: bool| -> (DVector<f64>, f64) {
        let n = if beam { basis.n_w } else { basis.n_phi };
        if prof.is_zero() {
            return (DVector::zeros(n), 0.0);
        }
        let b = match prof {
            Profile::Polynomial { coeffs } => {
                basis.project_polynomial(&Polynomial::new(coeffs.clone()), beam)
            }
            _ => {
                let (a, b) = basis.project_loads(|y| prof.eval(y), |y| prof.eval(y));
                if beam {
                    a
                } else {
                    b
                }
            }
        };
        let c = if beam { chol_w.solve(&b) } else { chol_p.solve(&b) };
        let resid = basis
            .rule
            .integrate(|y| {
                let approx = if beam {
                    basis.eval_w(&c, y, 0)
                } else {
                    basis.eval_phi(&c, y, 0)
                };
                (prof.eval(y) - approx).powi(2)
            })
            .max(0.0)
            .sqrt();
        (c, resid)
    };
    let (qw, r0) = project(&ic.w0, true);
    let (qw_dot, r1) = project(&ic.w1, true);
    let (qphi, r2) = project(&ic.phi0, false);
    let (qphi_dot, r3) = project(&ic.phi1, false);
    Ok(Projection {
        state: SemiDiscreteState {
            t: 0.0,
            qw,
            qw_dot,
            qphi,
            qphi_dot,
        },
        residuals: [r0, r1, r2, r3],
    })
}

/// Projects distributed loads onto the basis, with a fast path for
/// separable fields.
#[derive(Debug, Clone)]
pub struct LoadProjector {
    d1: Field,
    d2: Field,
    sep1: Option<(DVector<f64>, crate::model::Signal)>,
    sep2: Option<(DVector<f64>, crate::model::Signal)>,
}

impl LoadProjector {
    pub fn new(basis: &Basis, d1: &Field, d2: &Field) -> Self {
        let sep = |f: &Field, beam: bool| {
            f.separable().map(|(p, s)| {
                let v = if p.is_zero() {
                    DVector::zeros(if beam { basis.n_w } else { basis.n_phi })
                } else {
                    basis.project_polynomial(&p, beam)
                };
                (v, s)
            })
        };
        Self {
            d1: d1.clone(),
            d2: d2.clone(),
            sep1: sep(d1, true),
            sep2: sep(d2, false),
        }
    }

    /// `[∫ d1(·,t) v_i; ∫ d2(·,t) ψ_j]`.
    pub fn load(&self, basis: &Basis, t: f64) -> DVector<f64> {
        let beam = match &self.sep1 {
            Some((v, s)) => v * s.eval(t),
            None => basis.project_loads(|y| self.d1.eval(y, t), |_| 0.0).0,
        };
        let string = match &self.sep2 {
            Some((v, s)) => v * s.eval(t),
            None => basis.project_loads(|_| 0.0, |y| self.d2.eval(y, t)).1,
        };
        stack(&beam, &string)
    }
}

/// Block matrices of `M q̈ + (D + C_vel + D_fb) q̇ + (K + C_pos + K_fb) q = L3 d3 + L4 d4 + P`.
#[derive(Debug, Clone)]
pub struct DiscreteOperators {
    pub n_w: usize,
    pub n_phi: usize,
    pub params: PhysicalParams,
    pub mass: DMatrix<f64>,
    /// Elastic stiffness `diag(a1 G2_w, a2 G1_φ)`.
    pub stiffness: DMatrix<f64>,
    /// Kelvin–Voigt damping `diag(b1 G2_w, b2 G1_φ)`.
    pub damping: DMatrix<f64>,
    pub c_vel: DMatrix<f64>,
    pub c_pos: DMatrix<f64>,
    /// Tip feedback contributions (zero in open loop).
    pub d_fb: DMatrix<f64>,
    pub k_fb: DMatrix<f64>,
    pub l3: DVector<f64>,
    pub l4: DVector<f64>,
    pub feedback: Option<FeedbackGains>,
}

impl DiscreteOperators {
    pub fn dim(&self) -> usize {
        self.n_w + self.n_phi
    }

    pub fn total_damping(&self) -> DMatrix<f64> {
        &self.damping + &self.c_vel + &self.d_fb
    }

    pub fn total_stiffness(&self) -> DMatrix<f64> {
        &self.stiffness + &self.c_pos + &self.k_fb
    }

    /// Folds tip feedback into the matrices as rank-one trace products.
    pub fn with_feedback(mut self, basis: &Basis, g: FeedbackGains) -> Self {
        let n = self.dim();
        let vl = stack(&basis.v_l, &DVector::zeros(basis.n_phi));
        let pl = stack(&DVector::zeros(basis.n_w), &basis.psi_l);
        let vv = &vl * vl.transpose();
        let pp = &pl * pl.transpose();
        self.d_fb = &vv * g.k1 + &pp * g.k2;
        self.k_fb = &vv * (g.k1 * g.eps2) + &pp * (g.k2 * g.eps1);
        debug_assert_eq!(self.d_fb.nrows(), n);
        self.feedback = Some(g);
        self
    }

    /// Dense text export: one `[NAME] rows cols` section per matrix,
    /// row-major, 17 significant digits.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        let sections: Vec<(&str, DMatrix<f64>)> = vec![
            ("M", self.mass.clone()),
            ("K", self.stiffness.clone()),
            ("D", self.damping.clone()),
            ("C_vel", self.c_vel.clone()),
            ("C_pos", self.c_pos.clone()),
            ("D_fb", self.d_fb.clone()),
            ("K_fb", self.k_fb.clone()),
            ("L3", col(&self.l3)),
            ("L4", col(&self.l4)),
        ];
        for (name, m) in sections {
            let _ = writeln!(out, "[{name}] {} {}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }
}

/// Open-loop operators for the given parameters.
pub fn assemble(p: &PhysicalParams, basis: &Basis) -> Result<DiscreteOperators> {
    p.check_hard()?;
    if (p.l - basis.l).abs() > 1e-12 * p.l.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "basis built for l = {} but parameters have l = {}",
            basis.l, p.l
        )));
    }
    let (nw, np) = (basis.n_w, basis.n_phi);
    let n = nw + np;
    let block = |tl: &DMatrix<f64>, tr: &DMatrix<f64>, bl: &DMatrix<f64>, br: &DMatrix<f64>| {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (nw, nw)).copy_from(tl);
        m.view_mut((0, nw), (nw, np)).copy_from(tr);
        m.view_mut((nw, 0), (np, nw)).copy_from(bl);
        m.view_mut((nw, nw), (np, np)).copy_from(br);
        m
    };
    let zwp = DMatrix::zeros(nw, np);
    let zpw = DMatrix::zeros(np, nw);
    let zww = DMatrix::zeros(nw, nw);
    let x = &basis.cross;
    let xt = x.transpose();
    let mass = block(&basis.g0_w, &zwp, &zpw, &basis.g0_phi);
    let stiffness = block(&(&basis.g2_w * p.a1), &zwp, &zpw, &(&basis.g1_phi * p.a2));
    let damping = block(&(&basis.g2_w * p.b1), &zwp, &zpw, &(&basis.g1_phi * p.b2));
    let c_vel = block(
        &(&basis.g0_w * -p.q1),
        &(x * -p.p1),
        &(&xt * -p.q2),
        &(&basis.g0_phi * -p.p2),
    );
    let c_pos = block(&zww, &(x * -p.c1), &zpw, &(&basis.g0_phi * -p.c2));
    let l3 = stack(&(-&basis.v_l), &DVector::zeros(np));
    let l4 = stack(&DVector::zeros(nw), &basis.psi_l);
    Ok(DiscreteOperators {
        n_w: nw,
        n_phi: np,
        params: *p,
        mass,
        stiffness,
        damping,
        c_vel,
        c_pos,
        d_fb: DMatrix::zeros(n, n),
        k_fb: DMatrix::zeros(n, n),
        l3,
        l4,
        feedback: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn wavenumbers_match_known_values() {
        let k = clamped_free_wavenumbers(4);
        assert_relative_eq!(k[0], 1.875_104_068_711_961, epsilon = 1e-12);
        assert_relative_eq!(k[1], 4.694_091_132_974_175, epsilon = 1e-12);
        assert_relative_eq!(k[2], 7.854_757_438_237_613, epsilon = 1e-12);
        assert_relative_eq!(k[3], 10.995_540_734_875_467, epsilon = 1e-12);
    }

    #[test]
    fn beam_modes_are_orthonormal_and_satisfy_bcs() {
        let b = Basis::build(10, 3, 1.3).unwrap();
        for i in 0..10 {
            assert_eq!(b.beam(i, 0.0, 0).abs() < 1e-13, true);
            assert!(b.beam(i, 0.0, 1).abs() < 1e-11);
            // Free-end moment and shear vanish for eigenfunctions.
            let scale = b.beam(i, b.l, 2).abs().max(1.0);
            assert!(b.beam(i, b.l, 2).abs() / scale < 1e-8 * (i + 1) as f64);
        }
        let id = DMatrix::<f64>::identity(10, 10);
        assert!((&b.g0_w - id).amax() < 1e-11);
    }

    #[test]
    fn string_gram_matches_closed_form() {
        let b = Basis::build(2, 6, 1.0).unwrap();
        for j in 0..6 {
            let kj = (j as f64 + 0.5) * PI;
            assert_relative_eq!(b.g1_phi[(j, j)], kj * kj / 2.0, max_relative = 1e-12);
            assert_relative_eq!(b.g0_phi[(j, j)], 0.5, epsilon = 1e-13);
            for k in 0..6 {
                if k != j {
                    assert!(b.g0_phi[(j, k)].abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(Basis::build(0, 3, 1.0).is_err());
        assert!(Basis::build(3, 0, 1.0).is_err());
    }

    #[test]
    fn single_string_mode_stiffness() {
        let p = PhysicalParams {
            a2: 5.0,
            ..PhysicalParams::section4()
        };
        let b = Basis::build(1, 1, 1.0).unwrap();
        let ops = assemble(&p, &b).unwrap();
        assert_relative_eq!(ops.stiffness[(1, 1)], 5.0 * PI * PI / 8.0, max_relative = 1e-12);
    }

    #[test]
    fn decoupled_when_couplings_vanish() {
        let b = Basis::build(3, 3, 1.0).unwrap();
        let ops = assemble(&PhysicalParams::synthetic_uncoupled(), &b).unwrap();
        assert_eq!(ops.c_vel.amax(), 0.0);
        assert_eq!(ops.c_pos.amax(), 0.0);
    }

    #[test]
    fn polynomial_basis_represents_y_squared() {
        let l = 1.7;
        let b = Basis::build_with(BasisKind::Polynomial, 3, 2, l, 257).unwrap();
        let mut s = SemiDiscreteState::zeros(&b);
        s.qw[0] = l * l;
        let n = field_norms(&s, &b);
        assert_relative_eq!(n.wyy * n.wyy, 4.0 * l, max_relative = 1e-12);
        assert_relative_eq!(n.sup_w, l * l, max_relative = 1e-12);
    }

    #[test]
    fn export_has_all_sections() {
        let b = Basis::build(2, 2, 1.0).unwrap();
        let ops = assemble(&PhysicalParams::section4(), &b).unwrap();
        let txt = ops.export_text();
        assert!(txt.starts_with("[M] 4 4\n"));
        assert!(txt.contains("[L4] 4 1\n"));
        let first: f64 = txt.lines().nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
        assert_eq!(first, ops.mass[(0, 0)]);
    }

    #[test]
    fn feedback_adds_rank_one_terms() {
        let b = Basis::build(3, 2, 1.0).unwrap();
        let g = FeedbackGains {
            k1: 2.0,
            k2: 3.0,
            eps1: 0.1,
            eps2: 0.2,
        };
        let ops = assemble(&PhysicalParams::synthetic(), &b).unwrap().with_feedback(&b, g);
        let mut s = SemiDiscreteState::zeros(&b);
        s.qw[1] = 0.7;
        s.qphi[0] = -0.4;
        let q = s.displacement();
        let want = 2.0 * b.v_l.dot(&s.qw).powi(2) + 3.0 * b.psi_l.dot(&s.qphi).powi(2);
        assert_relative_eq!(q.dot(&(&ops.d_fb * &q)), want, max_relative = 1e-12);
    }

    #[test]
    fn augmented_energy_rejects_bad_eps() {
        let b = Basis::build(1, 1, 1.0).unwrap();
        let s = SemiDiscreteState::zeros(&b);
        assert!(augmented_energy(&s, &PhysicalParams::section4(), &b, 1.0, 0.1).is_err());
    }
}
