//! Gauss rules on the unit interval and collapsed-tensor rules on the
//! reference triangle.

use crate::error::{Error, Result};

/// Highest polynomial exactness offered by [`quadrature_rule`].
pub const MAX_EXACTNESS: usize = 12;

/// A quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
///
/// Points are barycentric triples; weights are positive and sum to the
/// reference area `1/2`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, exact to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
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
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Collapsed Gauss rule on the reference triangle exact for total degree
/// `exactness`.
///
/// The square `(u, v)` maps to `(x, y) = (u, v (1 - u))` with Jacobian
/// `1 - u`, so a degree-`p` integrand needs `p + 1` exactness in `u` and `p`
/// in `v`.
pub fn quadrature_rule(exactness: usize) -> Result<QuadratureRule> {
    if exactness > MAX_EXACTNESS {
        return Err(Error::QuadratureUnavailable {
            requested: exactness,
            max: MAX_EXACTNESS,
        });
    }
    let m = (exactness + 2).div_ceil(2).max(1);
    let (nodes, w) = gauss_legendre(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (u, wu) in nodes.iter().zip(&w) {
        for (v, wv) in nodes.iter().zip(&w) {
            let x = *u;
            let y = v * (1.0 - u);
            points.push([1.0 - x - y, x, y]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness,
    })
}

/// Gauss rule on `[0, 1]` exact for degree `exactness`.
pub fn line_rule(exactness: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre((exactness + 2).div_ceil(2).max(1))
}
