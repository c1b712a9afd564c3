//! Lifting operator `𝒯(d3, d4)` mapping tip inputs to a static state that
//! carries the boundary data, with checks of `ℬ𝒯 = I`, `𝒜𝒯 = 0` and `‖𝒯‖`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::galerkin::Basis;
use crate::model::PhysicalParams;
use crate::poly::Polynomial;
use crate::{Error, Result};

/// `𝒯(d3, d4) = (g, 0, h, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedElement {
    pub d3: f64,
    pub d4: f64,
    /// `g(y) = −(d3/(6a1)) y²(3l − y)`
    pub g: Polynomial,
    /// `h(y) = (d4/a2) y`
    pub h: Polynomial,
}

pub fn apply_t(d3: f64, d4: f64, p: &PhysicalParams) -> Result<LiftedElement> {
    if !(p.a1 > 0.0 && p.a2 > 0.0) {
        return Err(Error::InvalidInput("lifting requires a1, a2 > 0".into()));
    }
    let s = -d3 / (6.0 * p.a1);
    Ok(LiftedElement {
        d3,
        d4,
        g: Polynomial::new(vec![0.0, 0.0, 3.0 * p.l * s, -s]),
        h: Polynomial::new(vec![0.0, d4 / p.a2]),
    })
}

impl LiftedElement {
    /// `∂^k g / ∂y^k` at `y`.
    pub fn eval_g(&self, y: f64, k: usize) -> f64 {
        self.g.nth_derivative(k).eval(y)
    }

    pub fn eval_h(&self, y: f64, k: usize) -> f64 {
        self.h.nth_derivative(k).eval(y)
    }

    /// `a1‖g_yy‖² + a2‖h_y‖²` by exact polynomial integration.
    pub fn norm_sq(&self, p: &PhysicalParams) -> f64 {
        let g2 = self.g.nth_derivative(2);
        let h1 = self.h.derivative();
        p.a1 * g2.mul(&g2).integrate(0.0, p.l) + p.a2 * h1.mul(&h1).integrate(0.0, p.l)
    }
}

/// `d3² l³/(3a1) + d4² l/a2`.
pub fn closed_form_norm_sq(d3: f64, d4: f64, p: &PhysicalParams) -> f64 {
    d3 * d3 * p.l.powi(3) / (3.0 * p.a1) + d4 * d4 * p.l / p.a2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryCase {
    pub d3: f64,
    pub d4: f64,
    /// `(a1 g_yy)_y(l)`, should equal `d3`.
    pub shear: f64,
    /// `(a1 g_yy)(l)`, should vanish.
    pub moment: f64,
    /// `(a2 h_y)(l)`, should equal `d4`.
    pub string_flux: f64,
    /// Largest coefficient of `(a1 g_yy)_yy` and `(a2 h_y)_y`.
    pub interior: f64,
    /// `|g(0)| + |g'(0)| + |h(0)|`
    pub clamped: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryIdentityReport {
    pub cases: Vec<BoundaryCase>,
    pub max_residual: f64,
    pub pass: bool,
}

pub const IDENTITY_TOL: f64 = 1e-12;

/// Default input grid: axes, diagonals and a few scales.
pub fn default_pairs() -> Vec<(f64, f64)> {
    let mut v = vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
    for s in [-2.5, -0.1, 0.7, 3.0] {
        for t in [-1.5, 0.2, 4.0] {
            v.push((s, t));
        }
    }
    v
}

/// Symbolic check of the boundary and interior identities of `𝒯`, with the
/// residual measured relative to `max(1, |d3|, |d4|)`.
pub fn check_boundary_identity(p: &PhysicalParams, pairs: &[(f64, f64)]) -> Result<BoundaryIdentityReport> {
    let l = p.l;
    let mut cases = Vec::with_capacity(pairs.len());
    for &(d3, d4) in pairs {
        let e = apply_t(d3, d4, p)?;
        let bending = e.g.nth_derivative(2).scale(p.a1);
        let flux = e.h.derivative().scale(p.a2);
        let shear = bending.derivative().eval(l);
        let moment = bending.eval(l);
        let string_flux = flux.eval(l);
        let interior = bending
            .nth_derivative(2)
            .coeffs
            .iter()
            .chain(flux.derivative().coeffs.iter())
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let clamped = e.g.eval(0.0).abs() + e.g.derivative().eval(0.0).abs() + e.h.eval(0.0).abs();
        let scale = 1f64.max(d3.abs()).max(d4.abs());
        let residual = [(shear - d3).abs(), moment.abs(), (string_flux - d4).abs(), interior, clamped]
            .into_iter()
            .fold(0.0, f64::max)
            / scale;
        cases.push(BoundaryCase {
            d3,
            d4,
            shear,
            moment,
            string_flux,
            interior,
            clamped,
            residual,
        });
    }
    let max_residual = cases.iter().fold(0.0f64, |m, c| m.max(c.residual));
    Ok(BoundaryIdentityReport {
        cases,
        max_residual,
        pass: max_residual < IDENTITY_TOL,
    })
}

/// `‖𝒯‖ = √(l · max(1/a2, l²/(3a1)))`.
pub fn operator_norm(p: &PhysicalParams) -> f64 {
    (p.l * (1.0 / p.a2).max(p.l * p.l / (3.0 * p.a1))).sqrt()
}

/// Sup of `‖𝒯(cos θ, sin θ)‖` over the unit circle: coarse angle grid then
/// golden-section refinement around the best grid angle.
pub fn unit_circle_sup(norm: impl Fn(f64, f64) -> f64) -> f64 {
    let f = |th: f64| norm(th.cos(), th.sin());
    let n = 720;
    let h = std::f64::consts::PI / n as f64;
    let (mut best, mut best_v) = (0.0, f64::NEG_INFINITY);
    for k in 0..=n {
        let th = k as f64 * h;
        let v = f(th);
        if v > best_v {
            best = th;
            best_v = v;
        }
    }
    let (mut a, mut b) = (best - h, best + h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best_v.max(f(0.5 * (a + b)))
}

/// Galerkin coefficients of `(g, h)`: Gram solves of the quadrature loads.
pub fn project_lifted(e: &LiftedElement, basis: &Basis) -> Result<(DVector<f64>, DVector<f64>)> {
    let (fw, fp) = basis.project_loads(|y| e.g.eval(y), |y| e.h.eval(y));
    let qw = basis
        .g0_w
        .clone()
        .cholesky()
        .ok_or(Error::Singular { context: "beam Gram matrix".into() })?
        .solve(&fw);
    let qp = basis
        .g0_phi
        .clone()
        .cholesky()
        .ok_or(Error::Singular { context: "string Gram matrix".into() })?
        .solve(&fp);
    Ok((qw, qp))
}

/// `a1 qwᵀ G2 qw + a2 qφᵀ G1 qφ` for the projected element.
pub fn projected_norm_sq(e: &LiftedElement, p: &PhysicalParams, basis: &Basis) -> Result<f64> {
    let (qw, qp) = project_lifted(e, basis)?;
    Ok(p.a1 * (qw.transpose() * &basis.g2_w * &qw)[0] + p.a2 * (qp.transpose() * &basis.g1_phi * &qp)[0])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormCheck {
    pub closed_form: f64,
    /// Sup over the unit circle using the exact polynomial norm.
    pub symbolic_sup: f64,
    /// Sup over the unit circle using the Galerkin projection, when a basis is supplied.
    pub projected_sup: Option<f64>,
    pub max_rel_err: f64,
}

pub fn operator_norm_check(p: &PhysicalParams, basis: Option<&Basis>) -> Result<NormCheck> {
    let closed_form = operator_norm(p);
    apply_t(0.0, 0.0, p)?;
    let symbolic_sup = unit_circle_sup(|d3, d4| {
        apply_t(d3, d4, p).map(|e| e.norm_sq(p).sqrt()).unwrap_or(f64::NAN)
    });
    let projected_sup = match basis {
        Some(b) => {
            // Quadratic form in (d3, d4): assemble from three evaluations.
            let n = |d3, d4| projected_norm_sq(&apply_t(d3, d4, p)?, p, b);
            let (q11, q22, qs) = (n(1.0, 0.0)?, n(0.0, 1.0)?, n(1.0, 1.0)?);
            let q12 = 0.5 * (qs - q11 - q22);
            Some(unit_circle_sup(|c, s| (q11 * c * c + 2.0 * q12 * c * s + q22 * s * s).max(0.0).sqrt()))
        }
        None => None,
    };
    let rel = |x: f64| ((x - closed_form) / closed_form).abs();
    let max_rel_err = rel(symbolic_sup).max(projected_sup.map_or(0.0, rel));
    Ok(NormCheck {
        closed_form,
        symbolic_sup,
        projected_sup,
        max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::BasisKind;
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
    fn apply_t_examples() {
        let p = unit();
        let z = apply_t(0.0, 0.0, &p).unwrap();
        assert!(z.g.is_zero() && z.h.is_zero());
        let p6 = PhysicalParams { a1: 2.0, ..unit() };
        let e = apply_t(12.0, 0.0, &p6).unwrap();
        assert_relative_eq!(e.eval_g(1.0, 0), -2.0, epsilon = 1e-15);
        assert_relative_eq!(e.eval_g(0.5, 0), -0.25 * 2.5, epsilon = 1e-15);
        let p3 = PhysicalParams { a2: 7.0, ..unit() };
        let e = apply_t(0.0, 7.0, &p3).unwrap();
        assert_relative_eq!(e.eval_h(0.3, 0), 0.3, epsilon = 1e-15);
        assert_relative_eq!(e.eval_h(1.0, 0), 1.0, epsilon = 1e-15);
        assert!(apply_t(1.0, 1.0, &PhysicalParams { a1: 0.0, ..unit() }).is_err());
    }

    #[test]
    fn boundary_unit_inputs() {
        let p = PhysicalParams::section4();
        let r = check_boundary_identity(&p, &[(1.0, 0.0), (0.0, 1.0), (0.0, 0.0)]).unwrap();
        assert!(r.pass);
        assert_relative_eq!(r.cases[0].shear, 1.0, epsilon = 1e-14);
        assert_eq!(r.cases[0].string_flux, 0.0);
        assert_relative_eq!(r.cases[1].string_flux, 1.0, epsilon = 1e-14);
        assert_eq!(r.cases[2].residual, 0.0);
    }

    #[test]
    fn norm_examples() {
        assert_relative_eq!(operator_norm(&unit()), 1.0);
        assert_relative_eq!(operator_norm(&PhysicalParams::section4()), 0.2f64.sqrt(), epsilon = 1e-15);
        assert!(operator_norm(&PhysicalParams { l: 1e-8, ..unit() }) < 1e-3);
    }

    #[test]
    fn norm_checks_agree() {
        let p = PhysicalParams::section4();
        let b = Basis::build_with(BasisKind::Polynomial, 4, 3, p.l, 33).unwrap();
        let c = operator_norm_check(&p, Some(&b)).unwrap();
        assert!(c.max_rel_err < 1e-12, "{c:?}");
        let e = apply_t(0.8, -1.3, &p).unwrap();
        assert_relative_eq!(e.norm_sq(&p), closed_form_norm_sq(0.8, -1.3, &p), max_relative = 1e-13);
    }
}
