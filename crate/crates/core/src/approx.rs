//! Restricted-range approximation and error measurement.
//!
//! Given `g` in the finite element space with `|f - g| <= e` for a target `f`
//! whose range lies in `[m, M]`, the affine contraction
//! `q = mbar + s (g - mbar)` with `mbar = (m + M)/2` and
//! `s = (M - m) / (M - m + 2e)` has range in `[m, M]` and `|f - q| <= 2e`.
//! Bernstein coefficients transform the same way, so the construction acts
//! directly on coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::TensorField;
use crate::bernstein::{barycentric_lattice, ReferenceTabulation};
use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::quadrature::{quadrature_rule, MAX_EXACTNESS};
use crate::space::{FEFunction, FunctionSpace};

/// A closed interval `[m, M]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RangeInterval {
    pub m: f64,
    pub big_m: f64,
}

impl RangeInterval {
    pub fn new(m: f64, big_m: f64) -> Result<Self> {
        if !(m <= big_m) {
            return Err(Error::InvalidArgument(format!("empty interval [{m}, {big_m}]")));
        }
        Ok(RangeInterval { m, big_m })
    }

    pub fn mbar(&self) -> f64 {
        0.5 * (self.m + self.big_m)
    }

    pub fn width(&self) -> f64 {
        self.big_m - self.m
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.m - tol && v <= self.big_m + tol
    }
}

/// Contraction factor `s = (M - m) / (M - m + 2 err)`; `1` when both vanish.
pub fn contraction_factor(interval: RangeInterval, err_inf: f64) -> f64 {
    let w = interval.width();
    if w + 2.0 * err_inf == 0.0 {
        1.0
    } else {
        w / (w + 2.0 * err_inf)
    }
}

/// `q = mbar + s (g - mbar)`, computed on Bernstein coefficients.
pub fn despres_construction(g: &FEFunction, interval: RangeInterval, err_inf: f64) -> Result<FEFunction> {
    if !(err_inf >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative error bound {err_inf}")));
    }
    RangeInterval::new(interval.m, interval.big_m)?;
    let s = contraction_factor(interval, err_inf);
    let mbar = interval.mbar();
    let coeffs = g.coeffs.iter().map(|c| mbar + s * (c - mbar)).collect();
    FEFunction::new(g.space().clone(), coeffs)
}

/// Lattice order used for sampled sup norms: `4k + 1`.
pub fn default_sampling_order(degree: usize) -> usize {
    4 * degree + 1
}

/// Calls `visit(point, value)` at every barycentric lattice point of order
/// `order` in every cell. Shared vertices and edges are visited once per
/// cell.
pub fn for_each_sample(g: &FEFunction, order: usize, mut visit: impl FnMut(Point, f64)) {
    let space = g.space();
    let pts = barycentric_lattice(order);
    let tab = ReferenceTabulation::new(space.degree(), &pts, 0).expect("valid degree");
    for (c, geom) in space.mesh().geometries().iter().enumerate() {
        let coeffs = g.cell_coeffs(c);
        for (q, bary) in pts.iter().enumerate() {
            let v: f64 = coeffs.iter().enumerate().map(|(b, cb)| cb * tab.value(b, q)).sum();
            visit(geom.physical(*bary), v);
        }
    }
}

/// Largest `|f - g|` over the order-`4k+1` lattice in every cell. This is a
/// lower bound for the true sup norm.
pub fn sup_norm_estimate(f: impl Fn(Point) -> f64, g: &FEFunction) -> f64 {
    sup_norm_estimate_with(f, g, default_sampling_order(g.space().degree()))
}

pub fn sup_norm_estimate_with(f: impl Fn(Point) -> f64, g: &FEFunction, order: usize) -> f64 {
    let mut worst = 0.0f64;
    for_each_sample(g, order, |p, v| worst = worst.max((f(p) - v).abs()));
    worst
}

/// Sampled `(min, max)` of `g` on the order-`4k+1` lattice.
pub fn sampled_range(g: &FEFunction) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for_each_sample(g, default_sampling_order(g.space().degree()), |_, v| {
        lo = lo.min(v);
        hi = hi.max(v);
    });
    (lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormReport {
    /// Sampled on the order-`4k+1` lattice.
    pub linf: f64,
    pub l2: f64,
    pub h1_semi: f64,
    pub energy: f64,
    pub sampling_points_per_cell: usize,
}

/// Errors of `u_h` against `exact` in L2, the H1 seminorm and the energy
/// norm `(int kappa grad e . grad e)^(1/2)`, with quadrature exact to
/// degree `2k + 4`.
pub fn error_norms(
    u_h: &FEFunction,
    exact: impl Fn(Point) -> f64,
    exact_grad: impl Fn(Point) -> [f64; 2],
    kappa: &TensorField,
) -> Result<NormReport> {
    let space = u_h.space();
    let rule = quadrature_rule((2 * space.degree() + 4).min(MAX_EXACTNESS))?;
    let tab = ReferenceTabulation::new(space.degree(), &rule.points, 1)?;
    let (mut l2, mut h1, mut en) = (0.0, 0.0, 0.0);
    for (c, g) in space.mesh().geometries().iter().enumerate() {
        let coeffs = u_h.cell_coeffs(c);
        for (q, w) in rule.weights.iter().enumerate() {
            let jw = 2.0 * g.area * w;
            let p = g.physical(rule.points[q]);
            let mut v = 0.0;
            let mut grad = [0.0; 2];
            for (b, cb) in coeffs.iter().enumerate() {
                v += cb * tab.value(b, q);
                let gb = tab.gradient(b, q, &g.grad_bary);
                grad[0] += cb * gb[0];
                grad[1] += cb * gb[1];
            }
            let e = exact(p) - v;
            let eg = exact_grad(p);
            let de = [eg[0] - grad[0], eg[1] - grad[1]];
            let k = kappa.eval(p);
            l2 += jw * e * e;
            h1 += jw * (de[0] * de[0] + de[1] * de[1]);
            en += jw
                * (de[0] * (k[0][0] * de[0] + k[0][1] * de[1]) + de[1] * (k[1][0] * de[0] + k[1][1] * de[1]));
        }
    }
    let order = default_sampling_order(space.degree());
    Ok(NormReport {
        linf: sup_norm_estimate_with(&exact, u_h, order),
        l2: l2.sqrt(),
        h1_semi: h1.sqrt(),
        energy: en.max(0.0).sqrt(),
        sampling_points_per_cell: (order + 1) * (order + 2) / 2,
    })
}

/// `(||q||_2, ||grad q||_2)` by quadrature exact for the integrands.
pub fn l2_and_gradient_norms(q: &FEFunction) -> Result<(f64, f64)> {
    let space = q.space();
    let rule = quadrature_rule(2 * space.degree())?;
    let tab = ReferenceTabulation::new(space.degree(), &rule.points, 1)?;
    let (mut l2, mut h1) = (0.0, 0.0);
    for (c, g) in space.mesh().geometries().iter().enumerate() {
        let coeffs = q.cell_coeffs(c);
        for (k, w) in rule.weights.iter().enumerate() {
            let jw = 2.0 * g.area * w;
            let mut v = 0.0;
            let mut grad = [0.0; 2];
            for (b, cb) in coeffs.iter().enumerate() {
                v += cb * tab.value(b, k);
                let gb = tab.gradient(b, k, &g.grad_bary);
                grad[0] += cb * gb[0];
                grad[1] += cb * gb[1];
            }
            l2 += jw * v * v;
            h1 += jw * (grad[0] * grad[0] + grad[1] * grad[1]);
        }
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

/// Sampled `(||q||_inf, ||grad q||_inf)` on the order-`4k+1` lattice.
fn sampled_inf_norms(q: &FEFunction) -> Result<(f64, f64)> {
    let space = q.space();
    let pts = barycentric_lattice(default_sampling_order(space.degree()));
    let tab = ReferenceTabulation::new(space.degree(), &pts, 1)?;
    let (mut vmax, mut gmax) = (0.0f64, 0.0f64);
    for (c, g) in space.mesh().geometries().iter().enumerate() {
        let coeffs = q.cell_coeffs(c);
        for k in 0..pts.len() {
            let mut v = 0.0;
            let mut grad = [0.0; 2];
            for (b, cb) in coeffs.iter().enumerate() {
                v += cb * tab.value(b, k);
                let gb = tab.gradient(b, k, &g.grad_bary);
                grad[0] += cb * gb[0];
                grad[1] += cb * gb[1];
            }
            vmax = vmax.max(v.abs());
            gmax = gmax.max(grad[0].hypot(grad[1]));
        }
    }
    Ok((vmax, gmax))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    /// Sampled on the order-`4k+1` lattice.
    Inf,
}

/// `h ||grad q||_p / ||q||_p`, with `h` the largest cell diameter; zero for
/// `q = 0`.
pub fn inverse_ratio(q: &FEFunction, p: NormKind) -> Result<f64> {
    let h = q.space().mesh().max_diameter();
    let (v, g) = match p {
        NormKind::L2 => l2_and_gradient_norms(q)?,
        NormKind::Inf => sampled_inf_norms(q)?,
    };
    Ok(if v == 0.0 { 0.0 } else { h * g / v })
}

/// Largest [`inverse_ratio`] over `trials` functions with coefficients drawn
/// uniformly from `[-1, 1]` (seeded). An empirical lower bound for the
/// inverse-estimate constant.
pub fn inverse_constant_probe(space: &std::sync::Arc<FunctionSpace>, p: NormKind, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..trials {
        let coeffs = (0..space.ndofs()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let q = FEFunction::new(space.clone(), coeffs)?;
        best = best.max(inverse_ratio(&q, p)?);
    }
    Ok(best)
}

/// Both sides of `||grad(f - q)|| <= ||grad(f - g)|| + (C/h) ||f - g||` in L2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivativeBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `||grad(f - g)||_2`.
    pub gradient_error: f64,
    /// `||f - g||_2`.
    pub l2_error: f64,
    /// Largest cell diameter.
    pub h: f64,
    /// `C_I (1 + c)` with `C_I` the supplied inverse constant and
    /// `c = ||f - q|| / ||f - g||`.
    pub constant: f64,
    pub holds: bool,
}

/// Evaluates both sides of the derivative bound for `q` built from `g` by
/// [`despres_construction`] with the sampled `||f - g||_inf`.
///
/// The argument runs `f - q = (f - g) + (g - q)` with `g - q` in the
/// finite element space, so the inverse estimate with constant
/// `inverse_constant` gives `||grad(g - q)|| <= (C_I/h)(||f - g|| + ||f - q||)`.
pub fn derivative_bound_check(
    f: impl Fn(Point) -> f64,
    grad_f: impl Fn(Point) -> [f64; 2],
    g: &FEFunction,
    interval: RangeInterval,
    inverse_constant: f64,
) -> Result<DerivativeBoundReport> {
    let err = sup_norm_estimate(&f, g);
    let q = despres_construction(g, interval, err)?;
    let none = TensorField::isotropic(1.0);
    let eg = error_norms(g, &f, &grad_f, &none)?;
    let eq = error_norms(&q, &f, &grad_f, &none)?;
    let h = g.space().mesh().max_diameter();
    let factor = if eg.l2 > 0.0 { eq.l2 / eg.l2 } else { 0.0 };
    let constant = inverse_constant * (1.0 + factor);
    let rhs = eg.h1_semi + constant / h * eg.l2;
    Ok(DerivativeBoundReport {
        lhs: eq.h1_semi,
        rhs,
        gradient_error: eg.h1_semi,
        l2_error: eg.l2,
        h,
        constant,
        holds: eq.h1_semi <= rhs * (1.0 + 1e-12) + 1e-14,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainKind, DomainSpec, Mesh};
    use crate::space::build_space;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, n)).unwrap())
    }

    #[test]
    fn interval_basics() {
        assert!(RangeInterval::new(1.0, 0.0).is_err());
        let i = RangeInterval::new(-1.0, 3.0).unwrap();
        assert_eq!(i.mbar(), 1.0);
    }

    #[test]
    fn construction_scalars() {
        let s = build_space(square(2), 2).unwrap();
        let g = s.interpolate(|[x, y]| x - 2.0 * y);
        let i = RangeInterval::new(-1.0, 1.0).unwrap();
        assert_eq!(despres_construction(&g, i, 0.0).unwrap().coeffs, g.coeffs);
        let half = despres_construction(&g, i, 1.0).unwrap();
        for (a, b) in half.coeffs.iter().zip(&g.coeffs) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
        assert!(despres_construction(&g, i, -1.0).is_err());
        assert!(despres_construction(&g, RangeInterval { m: 1.0, big_m: 0.0 }, 0.0).is_err());
    }

    #[test]
    fn affine_equivariance() {
        let s = build_space(square(3), 3).unwrap();
        let g = s.interpolate(|[x, y]| (3.0 * x).sin() + y * y);
        let i = RangeInterval::new(-0.5, 1.5).unwrap();
        let q = despres_construction(&g, i, 0.3).unwrap();
        let lam = 2.5;
        let gl = FEFunction::new(s.clone(), g.coeffs.iter().map(|c| lam * c).collect()).unwrap();
        let ql = despres_construction(&gl, RangeInterval::new(lam * i.m, lam * i.big_m).unwrap(), lam * 0.3).unwrap();
        for (a, b) in ql.coeffs.iter().zip(&q.coeffs) {
            assert!((a - lam * b).abs() < 1e-13);
        }
    }

    #[test]
    fn sup_norm_examples() {
        for k in 1..=3 {
            let s = build_space(square(3), k).unwrap();
            let xy = if k >= 2 { 1.0 } else { 0.0 };
            let poly = move |[x, y]: Point| x.powi(k as i32) - 0.5 * y + xy * x * y;
            assert!(sup_norm_estimate(poly, &s.interpolate(poly)) < 1e-12);
            let c = s.interpolate(|_| 0.7);
            assert!((sup_norm_estimate(|_| 0.2, &c) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn norms_of_known_errors() {
        let kappa = TensorField::isotropic(1.0);
        for k in 1..=3 {
            let s = build_space(square(4), k).unwrap();
            let z = s.zero_function();
            let r = error_norms(&z, |_| 1.0, |_| [0.0; 2], &kappa).unwrap();
            assert!((r.l2 - 1.0).abs() < 1e-13);
            assert_eq!(r.h1_semi, 0.0);
        }
        let s = build_space(square(16), 3).unwrap();
        let r = error_norms(
            &s.zero_function(),
            |[x, y]| (PI * x).sin() * (PI * y).sin(),
            |[x, y]| [PI * (PI * x).cos() * (PI * y).sin(), PI * (PI * x).sin() * (PI * y).cos()],
            &TensorField::isotropic(2.0),
        )
        .unwrap();
        assert!((r.l2 - 0.5).abs() < 1e-8);
        // int |grad|^2 = pi^2/2, energy with kappa = 2 doubles it.
        assert!((r.h1_semi - (PI * PI / 2.0).sqrt()).abs() < 1e-8);
        assert!((r.energy - PI).abs() < 1e-8);
        assert!((r.linf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolant_of_polynomial_has_zero_error() {
        let kappa = TensorField::isotropic(0.3);
        for k in 1..=3 {
            let s = build_space(square(3), k).unwrap();
            let kk = k as i32;
            let xy = if k >= 2 { 1.0 } else { 0.0 };
            let u = move |[x, y]: Point| x.powi(kk) + y + xy * x * y;
            let du = move |[x, y]: Point| [k as f64 * x.powi(kk - 1) + xy * y, 1.0 + xy * x];
            let r = error_norms(&s.interpolate(u), u, du, &kappa).unwrap();
            assert!(r.l2 < 1e-10 && r.h1_semi < 1e-10 && r.energy < 1e-10 && r.linf < 1e-10);
        }
    }

    #[test]
    fn inverse_probe_is_mesh_stable() {
        let s = build_space(square(4), 1).unwrap();
        assert_eq!(inverse_ratio(&s.interpolate(|_| 3.0), NormKind::L2).unwrap(), 0.0);
        let mut prev: Option<f64> = None;
        for n in [4, 8, 16] {
            let s = build_space(square(n), 1).unwrap();
            // Hat function at the vertex nearest the center.
            let mid = (n / 2) * (n + 1) + n / 2;
            let mut c = vec![0.0; s.ndofs()];
            c[mid] = 1.0;
            let r = inverse_ratio(&FEFunction::new(s.clone(), c).unwrap(), NormKind::L2).unwrap();
            if let Some(p) = prev {
                assert!(((r / p) - 1.0f64).abs() < 0.05);
            }
            prev = Some(r);
        }
        for k in 1..=3 {
            let a = inverse_constant_probe(&build_space(square(4), k).unwrap(), NormKind::L2, 20, 1).unwrap();
            let b = inverse_constant_probe(&build_space(square(8), k).unwrap(), NormKind::L2, 20, 1).unwrap();
            assert!(a > 0.0 && b <= 1.05 * a, "k={k}: {a} {b}");
            let inf = inverse_constant_probe(&build_space(square(4), k).unwrap(), NormKind::Inf, 5, 1).unwrap();
            assert!(inf.is_finite() && inf > 0.0);
        }
    }

    #[test]
    fn derivative_bound_trivial_cases() {
        for k in 1..=3 {
            let s = build_space(square(4), k).unwrap();
            let kk = k as i32;
            let f = move |[x, y]: Point| 0.5 * x.powi(kk) + 0.25 * y;
            let df = move |[x, y]: Point| [0.5 * k as f64 * x.powi(kk - 1), 0.25 + 0.0 * y];
            let g = s.interpolate(f);
            let r = derivative_bound_check(f, df, &g, RangeInterval::new(0.0, 0.75).unwrap(), 5.0).unwrap();
            assert!(r.lhs <= 1e-10 && r.rhs <= 1e-10 && r.holds);
        }
        let s = build_space(square(8), 2).unwrap();
        let f = |[x, y]: Point| (2.0 * x).sin() * y;
        let df = |[x, y]: Point| [2.0 * (2.0 * x).cos() * y, (2.0 * x).sin()];
        let g = s.interpolate(f);
        // The construction barely contracts when the interval is huge.
        let r = derivative_bound_check(f, df, &g, RangeInterval::new(-1e12, 1e12).unwrap(), 5.0).unwrap();
        assert!((r.lhs - r.gradient_error).abs() < 1e-9);
        assert!(r.holds);
    }
}
