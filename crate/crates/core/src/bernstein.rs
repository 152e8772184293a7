//! Univariate and simplicial Bernstein polynomials.
//!
//! Local basis functions are indexed by [`MultiIndex`] triples in the fixed
//! order produced by [`enumerate_multiindices`]: descending lexicographic in
//! `(alpha_0, alpha_1)`. For degree 1 this is the vertex order `(1,0,0),
//! (0,1,0), (0,0,1)`; for degree 2 it continues `(1,1,0), (1,0,1), (0,2,0),
//! (0,1,1), (0,0,2)` after `(2,0,0)`.

use crate::error::{Error, Result};
use crate::mesh::CellGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub [usize; 3]);

impl MultiIndex {
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }

    /// Number of nonzero entries: 1 for vertex, 2 for edge, 3 for interior
    /// functions.
    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&a| a > 0).count()
    }

    /// Multinomial coefficient `|alpha|! / alpha!`.
    pub fn multinomial(&self) -> f64 {
        let [a, b, c] = self.0;
        factorial(a + b + c) / (factorial(a) * factorial(b) * factorial(c))
    }

    /// Lattice point `sum alpha_i v_i / n` in barycentric coordinates.
    pub fn lattice_point(&self) -> [f64; 3] {
        let n = self.order().max(1) as f64;
        self.0.map(|a| a as f64 / n)
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// `b^n_i(x) = C(n, i) x^i (1 - x)^(n - i)`.
pub fn univariate_bernstein(n: usize, i: usize, x: f64) -> Result<f64> {
    if i > n {
        return Err(Error::IndexOutOfRange { degree: n, index: i });
    }
    Ok(binomial(n, i) * x.powi(i as i32) * (1.0 - x).powi((n - i) as i32))
}

/// All multi-indices of order `n` in the crate's canonical order.
pub fn enumerate_multiindices(n: usize) -> Vec<MultiIndex> {
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for a0 in (0..=n).rev() {
        for a1 in (0..=n - a0).rev() {
            out.push(MultiIndex([a0, a1, n - a0 - a1]));
        }
    }
    out
}

/// Number of local basis functions of degree `n` on a triangle.
pub fn local_dimension(n: usize) -> usize {
    (n + 1) * (n + 2) / 2
}

/// `prod_i d^{d_i}/db_i^{d_i} b_i^{alpha_i}`, treating the barycentric
/// coordinates as independent variables.
fn monomial_derivative(alpha: [usize; 3], bary: [f64; 3], d: [usize; 3]) -> f64 {
    let mut v = 1.0;
    for i in 0..3 {
        if d[i] > alpha[i] {
            return 0.0;
        }
        let falling: usize = (0..d[i]).map(|j| alpha[i] - j).product();
        v *= falling as f64 * bary[i].powi((alpha[i] - d[i]) as i32);
    }
    v
}

/// Value of `B^n_alpha` at a barycentric point.
pub fn bernstein_value(alpha: MultiIndex, bary: [f64; 3]) -> f64 {
    alpha.multinomial() * monomial_derivative(alpha.0, bary, [0, 0, 0])
}

fn check_point(p: [f64; 3]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&b| b < -1e-12 || !b.is_finite()) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidBarycentric(p));
    }
    Ok(())
}

/// Basis values and barycentric derivatives at fixed reference points.
///
/// Because every cell is affine, physical derivatives on any cell follow
/// from these tables and the cell's constant barycentric gradients, so one
/// table serves a whole assembly loop.
#[derive(Clone, Debug)]
pub struct ReferenceTabulation {
    pub degree: usize,
    pub indices: Vec<MultiIndex>,
    pub points: Vec<[f64; 3]>,
    pub order: usize,
    // Flat layouts indexed by point * nbasis + basis.
    values: Vec<f64>,
    bary_grad: Vec<[f64; 3]>,
    bary_hess: Vec<[[f64; 3]; 3]>,
}

impl ReferenceTabulation {
    pub fn new(degree: usize, points: &[[f64; 3]], order: usize) -> Result<Self> {
        if order > 2 {
            return Err(Error::UnsupportedDerivativeOrder(order));
        }
        for &p in points {
            check_point(p)?;
        }
        let indices = enumerate_multiindices(degree);
        let nb = indices.len();
        let mut values = Vec::with_capacity(points.len() * nb);
        let mut bary_grad = Vec::new();
        let mut bary_hess = Vec::new();
        for &p in points {
            for alpha in &indices {
                let c = alpha.multinomial();
                values.push(c * monomial_derivative(alpha.0, p, [0, 0, 0]));
                if order >= 1 {
                    let mut g = [0.0; 3];
                    for (i, gi) in g.iter_mut().enumerate() {
                        let mut d = [0; 3];
                        d[i] = 1;
                        *gi = c * monomial_derivative(alpha.0, p, d);
                    }
                    bary_grad.push(g);
                }
                if order >= 2 {
                    let mut h = [[0.0; 3]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut d = [0; 3];
                            d[i] += 1;
                            d[j] += 1;
                            h[i][j] = c * monomial_derivative(alpha.0, p, d);
                        }
                    }
                    bary_hess.push(h);
                }
            }
        }
        Ok(ReferenceTabulation {
            degree,
            indices,
            points: points.to_vec(),
            order,
            values,
            bary_grad,
            bary_hess,
        })
    }

    pub fn num_basis(&self) -> usize {
        self.indices.len()
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn value(&self, basis: usize, point: usize) -> f64 {
        self.values[point * self.indices.len() + basis]
    }

    /// Physical gradient on a cell with barycentric gradients `grad_bary`.
    #[inline]
    pub fn gradient(&self, basis: usize, point: usize, grad_bary: &[[f64; 2]; 3]) -> [f64; 2] {
        let g = &self.bary_grad[point * self.indices.len() + basis];
        let mut out = [0.0; 2];
        for i in 0..3 {
            out[0] += g[i] * grad_bary[i][0];
            out[1] += g[i] * grad_bary[i][1];
        }
        out
    }

    /// Physical Hessian; barycentric coordinates have zero Hessian on affine
    /// cells, so only the second-order chain-rule term survives.
    #[inline]
    pub fn hessian(&self, basis: usize, point: usize, grad_bary: &[[f64; 2]; 3]) -> [[f64; 2]; 2] {
        let h = &self.bary_hess[point * self.indices.len() + basis];
        let mut out = [[0.0; 2]; 2];
        for i in 0..3 {
            for j in 0..3 {
                let hij = h[i][j];
                if hij == 0.0 {
                    continue;
                }
                for r in 0..2 {
                    for s in 0..2 {
                        out[r][s] += hij * grad_bary[i][r] * grad_bary[j][s];
                    }
                }
            }
        }
        out
    }
}

/// Basis data mapped onto one physical cell. Matrices are indexed
/// `[basis][point]`.
#[derive(Clone, Debug)]
pub struct BasisTabulation {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
    pub hessians: Vec<Vec<[[f64; 2]; 2]>>,
}

/// Tabulate the degree-`degree` basis and up to `order` derivatives at
/// barycentric `points` of the cell described by `geom`.
pub fn tabulate(
    degree: usize,
    geom: &CellGeometry,
    points: &[[f64; 3]],
    order: usize,
) -> Result<BasisTabulation> {
    let reference = ReferenceTabulation::new(degree, points, order)?;
    let nb = reference.num_basis();
    let np = points.len();
    let mut values = vec![vec![0.0; np]; nb];
    let mut gradients = vec![Vec::new(); nb];
    let mut hessians = vec![Vec::new(); nb];
    for b in 0..nb {
        for q in 0..np {
            values[b][q] = reference.value(b, q);
            if order >= 1 {
                gradients[b].push(reference.gradient(b, q, &geom.grad_bary));
            }
            if order >= 2 {
                hessians[b].push(reference.hessian(b, q, &geom.grad_bary));
            }
        }
    }
    Ok(BasisTabulation {
        degree,
        points: points.to_vec(),
        values,
        gradients,
        hessians,
    })
}

/// Sufficient range check: all Bernstein coefficients inside `[m, M]`
/// implies the polynomial's range is inside `[m, M]`. The converse fails.
pub fn coefficient_box_certificate(coeffs: &[f64], m: f64, big_m: f64) -> bool {
    coeffs.iter().all(|&c| c >= m && c <= big_m)
}

/// Barycentric lattice of order `order` (all `alpha / order`).
pub fn barycentric_lattice(order: usize) -> Vec<[f64; 3]> {
    if order == 0 {
        return vec![[1.0 / 3.0; 3]];
    }
    enumerate_multiindices(order)
        .iter()
        .map(|a| a.lattice_point())
        .collect()
}
