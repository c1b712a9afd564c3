//! Gauss–Legendre rules, single-panel and composite.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule on `[a, b]`: `panels` equal sub-intervals,
/// `points` nodes per panel.
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub a: f64,
    pub b: f64,
    pub panels: usize,
    pub points: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub const DEFAULT_PANELS: usize = 128;
    pub const DEFAULT_POINTS: usize = 12;

    pub fn new(a: f64, b: f64, panels: usize, points: usize) -> Self {
        assert!(panels >= 1 && b > a);
        let gl = GaussLegendre::new(points);
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * points);
        let mut weights = Vec::with_capacity(panels * points);
        for k in 0..panels {
            let left = a + k as f64 * h;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                nodes.push(left + 0.5 * h * (x + 1.0));
                weights.push(0.5 * h * w);
            }
        }
        Self {
            a,
            b,
            panels,
            points,
            nodes,
            weights,
        }
    }

    /// Default rule used for all Gram matrices: 128 panels of 12 points,
    /// exact for polynomials up to degree 23.
    pub fn standard(l: f64) -> Self {
        Self::new(0.0, l, Self::DEFAULT_PANELS, Self::DEFAULT_POINTS)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
