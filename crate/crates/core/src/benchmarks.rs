//! Problem data for the four numerical studies.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::assembly::{ScalarField, TensorField, VectorField};
use crate::mesh::{BoundaryTag, DomainKind, DomainSpec, Point};

/// Closed-form exact solution and its gradient.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
}

/// Coefficients, boundary data and bounds of one study.
#[derive(Clone)]
pub struct ProblemDefinition {
    pub name: &'static str,
    pub domain: DomainSpec,
    pub kappa: TensorField,
    /// `None` for pure diffusion.
    pub beta: Option<VectorField>,
    pub f: ScalarField,
    /// Constant Dirichlet value per boundary tag.
    pub dirichlet: Vec<(BoundaryTag, f64)>,
    pub exact: Option<ExactSolution>,
    /// Uniform coefficient bounds `(lb, ub)`; infinite entries are allowed.
    pub bounds: Option<(f64, f64)>,
    /// Initial state of transient problems.
    pub initial: Option<ScalarField>,
    /// Final time of transient problems.
    pub t_final: Option<f64>,
}

impl ProblemDefinition {
    /// Same problem on an `n x n` structured mesh.
    pub fn on_mesh(mut self, n: usize) -> Self {
        self.domain.n = n;
        self
    }
}

impl std::fmt::Debug for ProblemDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemDefinition")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("dirichlet", &self.dirichlet)
            .field("bounds", &self.bounds)
            .finish_non_exhaustive()
    }
}

/// Anisotropy parameter of the diffusion studies.
pub const MMS_EPSILON: f64 = 1e-4;

/// `kappa = [[y^2 + eps x^2, -(1 - eps) x y], [-(1 - eps) x y, x^2 + eps y^2]]`.
pub fn mms_kappa([x, y]: Point) -> [[f64; 2]; 2] {
    let e = MMS_EPSILON;
    let off = -(1.0 - e) * x * y;
    [[y * y + e * x * x, off], [off, x * x + e * y * y]]
}

/// Row divergence of [`mms_kappa`].
pub fn mms_kappa_divergence([x, y]: Point) -> [f64; 2] {
    let c = 3.0 * MMS_EPSILON - 1.0;
    [c * x, c * y]
}

pub fn mms_kappa_field() -> TensorField {
    TensorField::new(mms_kappa).with_divergence(mms_kappa_divergence)
}

/// `u* = exp(2xy) sin^2(pi x) sin^2(2 pi y)`.
pub fn mms_exact([x, y]: Point) -> f64 {
    (2.0 * x * y).exp() * (PI * x).sin().powi(2) * (2.0 * PI * y).sin().powi(2)
}

struct MmsParts {
    e: f64,
    s: f64,
    s1: f64,
    s2: f64,
    t: f64,
    t1: f64,
    t2: f64,
}

// S = sin^2(pi x), T = sin^2(2 pi y) with first and second derivatives.
fn mms_parts([x, y]: Point) -> MmsParts {
    MmsParts {
        e: (2.0 * x * y).exp(),
        s: (PI * x).sin().powi(2),
        s1: PI * (2.0 * PI * x).sin(),
        s2: 2.0 * PI * PI * (2.0 * PI * x).cos(),
        t: (2.0 * PI * y).sin().powi(2),
        t1: 2.0 * PI * (4.0 * PI * y).sin(),
        t2: 8.0 * PI * PI * (4.0 * PI * y).cos(),
    }
}

pub fn mms_gradient(p: Point) -> [f64; 2] {
    let [x, y] = p;
    let MmsParts { e, s, s1, t, t1, .. } = mms_parts(p);
    [e * t * (2.0 * y * s + s1), e * s * (2.0 * x * t + t1)]
}

pub fn mms_hessian(p: Point) -> [[f64; 2]; 2] {
    let [x, y] = p;
    let MmsParts { e, s, s1, s2, t, t1, t2 } = mms_parts(p);
    let xx = e * t * (4.0 * y * y * s + 4.0 * y * s1 + s2);
    let yy = e * s * (4.0 * x * x * t + 4.0 * x * t1 + t2);
    let xy = e * ((2.0 * x * t + t1) * (2.0 * y * s + s1) + 2.0 * s * t);
    [[xx, xy], [xy, yy]]
}

/// `f = -div(kappa grad u*)`.
pub fn mms_forcing(p: Point) -> f64 {
    let k = mms_kappa(p);
    let d = mms_kappa_divergence(p);
    let g = mms_gradient(p);
    let h = mms_hessian(p);
    let contraction = k[0][0] * h[0][0] + 2.0 * k[0][1] * h[0][1] + k[1][1] * h[1][1];
    -(d[0] * g[0] + d[1] * g[1] + contraction)
}

/// Manufactured-solution diffusion study on the unit square: homogeneous
/// Dirichlet data, lower bound zero.
pub fn mms_diffusion() -> ProblemDefinition {
    ProblemDefinition {
        name: "mms",
        domain: DomainSpec::new(DomainKind::UnitSquare, 4),
        kappa: mms_kappa_field(),
        beta: None,
        f: ScalarField::new(mms_forcing),
        dirichlet: vec![(BoundaryTag::Exterior, 0.0)],
        exact: Some(ExactSolution {
            value: Arc::new(mms_exact),
            gradient: Arc::new(mms_gradient),
        }),
        bounds: Some((0.0, f64::INFINITY)),
        initial: None,
        t_final: None,
    }
}

/// Indicator of `[3/8, 5/8]^2`.
pub fn rough_forcing([x, y]: Point) -> f64 {
    let inside = |t: f64| (0.375..=0.625).contains(&t);
    if inside(x) && inside(y) {
        1.0
    } else {
        0.0
    }
}

/// Same operator as [`mms_diffusion`] with a discontinuous source.
pub fn rough_diffusion() -> ProblemDefinition {
    ProblemDefinition {
        name: "rough",
        domain: DomainSpec::new(DomainKind::UnitSquare, 16),
        f: ScalarField::new(rough_forcing),
        exact: None,
        ..mms_diffusion()
    }
}

pub const ALPHA_L: f64 = 1e-1;
pub const ALPHA_T: f64 = 1e-5;
pub const D_M: f64 = 1e-9;

/// `beta = (cos(pi y^2), sin(2 pi x) + cos(2 pi x^2))`.
pub fn supg_beta([x, y]: Point) -> [f64; 2] {
    [(PI * y * y).cos(), (2.0 * PI * x).sin() + (2.0 * PI * x * x).cos()]
}

/// `J[k][j] = d beta_k / d x_j`.
fn supg_beta_jacobian([x, y]: Point) -> [[f64; 2]; 2] {
    [
        [0.0, -2.0 * PI * y * (PI * y * y).sin()],
        [2.0 * PI * (2.0 * PI * x).cos() - 4.0 * PI * x * (2.0 * PI * x * x).sin(), 0.0],
    ]
}

/// `kappa = (a_T |beta| + D_m) I + (a_L - a_T) beta beta^T / |beta|`, or
/// `D_m I` where `|beta| < 1e-12`.
pub fn supg_kappa(p: Point) -> [[f64; 2]; 2] {
    let b = supg_beta(p);
    let nb = b[0].hypot(b[1]);
    if nb < 1e-12 {
        return [[D_M, 0.0], [0.0, D_M]];
    }
    let iso = ALPHA_T * nb + D_M;
    let c = (ALPHA_L - ALPHA_T) / nb;
    [
        [iso + c * b[0] * b[0], c * b[0] * b[1]],
        [c * b[1] * b[0], iso + c * b[1] * b[1]],
    ]
}

/// Row divergence of [`supg_kappa`], using `div beta = 0`.
pub fn supg_kappa_divergence(p: Point) -> [f64; 2] {
    let b = supg_beta(p);
    let nb = b[0].hypot(b[1]);
    if nb < 1e-12 {
        return [0.0, 0.0];
    }
    let jac = supg_beta_jacobian(p);
    let c = ALPHA_L - ALPHA_T;
    // d_j |beta| = sum_k beta_k d_j beta_k / |beta|
    let dnorm = [
        (b[0] * jac[0][0] + b[1] * jac[1][0]) / nb,
        (b[0] * jac[0][1] + b[1] * jac[1][1]) / nb,
    ];
    let b_dot_dnorm = b[0] * dnorm[0] + b[1] * dnorm[1];
    let mut out = [0.0; 2];
    for j in 0..2 {
        let advect_bj = b[0] * jac[j][0] + b[1] * jac[j][1];
        out[j] = ALPHA_T * dnorm[j] + c * (advect_bj / nb - b[j] * b_dot_dnorm / (nb * nb));
    }
    out
}

/// Convection-dominated transport around the square hole: `u = 0` outside,
/// `u = 1` on the hole, bounds `[0, 1]`.
pub fn supg_benchmark() -> ProblemDefinition {
    ProblemDefinition {
        name: "supg",
        domain: DomainSpec::new(DomainKind::SquareWithHole, 36),
        kappa: TensorField::new(supg_kappa).with_divergence(supg_kappa_divergence),
        beta: Some(VectorField::new(supg_beta)),
        f: ScalarField::constant(0.0),
        dirichlet: vec![(BoundaryTag::Exterior, 0.0), (BoundaryTag::Hole, 1.0)],
        exact: None,
        bounds: Some((0.0, 1.0)),
        initial: None,
        t_final: None,
    }
}

pub const CONE_CENTER: Point = [0.225, 0.0];
pub const CONE_RADIUS: f64 = 0.1;

/// `max(0, 1 - r / 0.1)` with `r` the distance to `(0.225, 0)`.
pub fn cone_profile([x, y]: Point) -> f64 {
    let r = (x - CONE_CENTER[0]).hypot(y - CONE_CENTER[1]);
    (1.0 - r / CONE_RADIUS).max(0.0)
}

/// Gradient of [`cone_profile`] (zero at the apex and outside the support).
pub fn cone_gradient([x, y]: Point) -> [f64; 2] {
    let (dx, dy) = (x - CONE_CENTER[0], y - CONE_CENTER[1]);
    let r = dx.hypot(dy);
    if r == 0.0 || r >= CONE_RADIUS {
        [0.0, 0.0]
    } else {
        [-dx / (r * CONE_RADIUS), -dy / (r * CONE_RADIUS)]
    }
}

/// Rigid rotation of a cone on `[-1/2, 1/2]^2` over one period `2 pi`.
pub fn rotating_cone() -> ProblemDefinition {
    ProblemDefinition {
        name: "cone",
        domain: DomainSpec::new(DomainKind::CenteredSquare, 32),
        kappa: TensorField::isotropic(1e-4),
        beta: Some(VectorField::new(|[x, y]| [-y, x])),
        f: ScalarField::constant(0.0),
        dirichlet: vec![(BoundaryTag::Exterior, 0.0)],
        exact: Some(ExactSolution {
            value: Arc::new(cone_profile),
            gradient: Arc::new(cone_gradient),
        }),
        bounds: Some((0.0, 1.0)),
        initial: Some(ScalarField::new(cone_profile)),
        t_final: Some(2.0 * PI),
    }
}
