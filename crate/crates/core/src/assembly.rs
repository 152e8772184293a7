//! Sparse assembly of the bilinear and linear forms, and Dirichlet handling.
//!
//! Local matrices are stored row = test function, column = trial function,
//! so an assembled `A` satisfies `A_ij = a(phi_j, phi_i)`.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::bernstein::ReferenceTabulation;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, CellGeometry, Point};
use crate::quadrature::{line_rule, quadrature_rule, QuadratureRule};
use crate::space::FunctionSpace;
use crate::sparse::CsrMatrix;

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
type TensorFn = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// A scalar coefficient such as `f` or `gamma`.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Function(ScalarFn),
}

impl ScalarField {
    pub fn constant(c: f64) -> Self {
        ScalarField::Constant(c)
    }

    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, p: Point) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Function(f) => f(p),
        }
    }
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "ScalarField::Constant({c})"),
            ScalarField::Function(_) => write!(f, "ScalarField::Function(..)"),
        }
    }
}

/// A velocity field `beta`.
#[derive(Clone)]
pub struct VectorField(VectorFn);

impl VectorField {
    pub fn new(f: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        VectorField(Arc::new(f))
    }

    pub fn constant(v: [f64; 2]) -> Self {
        VectorField::new(move |_| v)
    }

    #[inline]
    pub fn eval(&self, p: Point) -> [f64; 2] {
        (self.0)(p)
    }
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("VectorField(..)")
    }
}

/// A symmetric 2x2 diffusion tensor `kappa`, optionally with its divergence
/// `(sum_i d_i kappa_ij)_j`, which the SUPG strong residual needs.
#[derive(Clone)]
pub struct TensorField {
    value: TensorFn,
    divergence: Option<VectorFn>,
}

impl TensorField {
    pub fn new(value: impl Fn(Point) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        TensorField {
            value: Arc::new(value),
            divergence: None,
        }
    }

    pub fn with_divergence(mut self, div: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static) -> Self {
        self.divergence = Some(Arc::new(div));
        self
    }

    /// `c I`, with zero divergence.
    pub fn isotropic(c: f64) -> Self {
        TensorField::new(move |_| [[c, 0.0], [0.0, c]]).with_divergence(|_| [0.0, 0.0])
    }

    #[inline]
    pub fn eval(&self, p: Point) -> [[f64; 2]; 2] {
        (self.value)(p)
    }

    pub fn divergence(&self, p: Point) -> Option<[f64; 2]> {
        self.divergence.as_ref().map(|d| d(p))
    }

    pub fn has_divergence(&self) -> bool {
        self.divergence.is_some()
    }
}

impl std::fmt::Debug for TensorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TensorField(divergence: {})", self.divergence.is_some())
    }
}

/// Stabilization parameter used by [`Assembler::supg`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupgDelta {
    /// `h / (2 |beta(x)|)` per quadrature point, `h` the cell diameter and
    /// `|beta|` floored at `1e-12`.
    Standard,
    Fixed(f64),
}

/// A linear system with the Dirichlet data it carries.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dirichlet_dofs: Vec<usize>,
    pub dirichlet_values: Vec<f64>,
}

impl AssembledSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        AssembledSystem {
            matrix,
            rhs,
            dirichlet_dofs: Vec::new(),
            dirichlet_values: Vec::new(),
        }
    }
}

/// Drives cell loops over one function space.
pub struct Assembler<'a> {
    space: &'a FunctionSpace,
    exactness: usize,
    parallel: bool,
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn mat_vec(m: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

impl<'a> Assembler<'a> {
    /// Quadrature exactness defaults to `2k + 2`.
    pub fn new(space: &'a FunctionSpace) -> Self {
        Assembler {
            space,
            exactness: 2 * space.degree() + 2,
            parallel: false,
        }
    }

    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn with_exactness(mut self, exactness: usize) -> Self {
        self.exactness = exactness;
        self
    }

    fn tables(&self, order: usize) -> Result<(QuadratureRule, ReferenceTabulation, Vec<CellGeometry>)> {
        let rule = quadrature_rule(self.exactness)?;
        let tab = ReferenceTabulation::new(self.space.degree(), &rule.points, order)?;
        Ok((rule, tab, self.space.mesh().geometries()))
    }

    fn local_blocks<T: Send>(&self, ncells: usize, kernel: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        if self.parallel {
            (0..ncells).into_par_iter().map(kernel).collect()
        } else {
            (0..ncells).map(kernel).collect()
        }
    }

    /// Scatter per-cell dense blocks into a global matrix. The merge runs
    /// in cell order, so serial and parallel assembly agree bitwise.
    fn scatter_matrix(&self, blocks: Vec<Vec<f64>>) -> Result<CsrMatrix> {
        let n = self.space.ndofs();
        let nb = self.space.local_indices().len();
        let mut t = Vec::with_capacity(blocks.len() * nb * nb);
        for (c, block) in blocks.iter().enumerate() {
            let dofs = self.space.cell_dofs(c);
            for i in 0..nb {
                for j in 0..nb {
                    t.push((dofs[i], dofs[j], block[i * nb + j]));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn scatter_vector(&self, blocks: Vec<Vec<f64>>) -> Vec<f64> {
        let mut b = vec![0.0; self.space.ndofs()];
        for (c, block) in blocks.iter().enumerate() {
            for (&d, v) in self.space.cell_dofs(c).iter().zip(block) {
                b[d] += v;
            }
        }
        b
    }

    pub fn mass(&self) -> Result<CsrMatrix> {
        let (rule, tab, geoms) = self.tables(0)?;
        let nb = tab.num_basis();
        let blocks = self.local_blocks(geoms.len(), |c| {
            let g = &geoms[c];
            let mut block = vec![0.0; nb * nb];
            for (q, w) in rule.weights.iter().enumerate() {
                let jw = 2.0 * g.area * w;
                for i in 0..nb {
                    let vi = tab.value(i, q) * jw;
                    for j in 0..nb {
                        block[i * nb + j] += vi * tab.value(j, q);
                    }
                }
            }
            block
        });
        self.scatter_matrix(blocks)
    }

    pub fn diffusion(&self, kappa: &TensorField) -> Result<CsrMatrix> {
        let (rule, tab, geoms) = self.tables(1)?;
        let nb = tab.num_basis();
        let blocks = self.local_blocks(geoms.len(), |c| {
            let g = &geoms[c];
            let mut block = vec![0.0; nb * nb];
            let mut grads = vec![[0.0; 2]; nb];
            for (q, w) in rule.weights.iter().enumerate() {
                let jw = 2.0 * g.area * w;
                let k = kappa.eval(g.physical(rule.points[q]));
                for (b, gr) in grads.iter_mut().enumerate() {
                    *gr = tab.gradient(b, q, &g.grad_bary);
                }
                for j in 0..nb {
                    let flux = mat_vec(k, grads[j]);
                    for i in 0..nb {
                        block[i * nb + j] += jw * dot2(flux, grads[i]);
                    }
                }
            }
            block
        });
        self.scatter_matrix(blocks)
    }

    pub fn convection(&self, beta: &VectorField) -> Result<CsrMatrix> {
        let (rule, tab, geoms) = self.tables(1)?;
        let nb = tab.num_basis();
        let blocks = self.local_blocks(geoms.len(), |c| {
            let g = &geoms[c];
            let mut block = vec![0.0; nb * nb];
            for (q, w) in rule.weights.iter().enumerate() {
                let jw = 2.0 * g.area * w;
                let bv = beta.eval(g.physical(rule.points[q]));
                for j in 0..nb {
                    let adv = dot2(bv, tab.gradient(j, q, &g.grad_bary)) * jw;
                    for i in 0..nb {
                        block[i * nb + j] += adv * tab.value(i, q);
                    }
                }
            }
            block
        });
        self.scatter_matrix(blocks)
    }

    /// `b_i = int f phi_i`, plus `int_{tag} gamma phi_i ds` when `neumann`
    /// is given.
    pub fn load(&self, f: &ScalarField, neumann: Option<(BoundaryTag, &ScalarField)>) -> Result<Vec<f64>> {
        let (rule, tab, geoms) = self.tables(0)?;
        let nb = tab.num_basis();
        let blocks = self.local_blocks(geoms.len(), |c| {
            let g = &geoms[c];
            let mut block = vec![0.0; nb];
            for (q, w) in rule.weights.iter().enumerate() {
                let fw = 2.0 * g.area * w * f.eval(g.physical(rule.points[q]));
                for (i, bi) in block.iter_mut().enumerate() {
                    *bi += fw * tab.value(i, q);
                }
            }
            block
        });
        let mut b = self.scatter_vector(blocks);
        if let Some((tag, gamma)) = neumann {
            self.add_boundary_load(&mut b, tag, gamma)?;
        }
        Ok(b)
    }

    fn add_boundary_load(&self, b: &mut [f64], tag: BoundaryTag, gamma: &ScalarField) -> Result<()> {
        let mesh = self.space.mesh();
        if !mesh.has_tag(tag) {
            return Err(Error::UnknownTag(tag));
        }
        let mut edge_cell = HashMap::new();
        for (c, edges) in mesh.cell_edges().iter().enumerate() {
            for &e in edges {
                edge_cell.insert(e, c);
            }
        }
        let (ts, ws) = line_rule(2 * self.space.degree() + 2);
        for facet in mesh.boundary_facets().iter().filter(|f| f.tag == tag) {
            let [a, bv] = facet.vertices;
            let e = mesh.edge_id(a, bv).expect("facet is an edge");
            let cell = edge_cell[&e];
            let g = mesh.cell_geometry(cell)?;
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[bv]);
            let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
            for (t, w) in ts.iter().zip(&ws) {
                let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                let bary = g.barycentric(p).map(|x| x.max(0.0));
                let s: f64 = bary.iter().sum();
                let bary = bary.map(|x| x / s);
                let gw = gamma.eval(p) * w * len;
                for (&d, alpha) in self.space.cell_dofs(cell).iter().zip(self.space.local_indices()) {
                    b[d] += gw * crate::bernstein::bernstein_value(*alpha, bary);
                }
            }
        }
        Ok(())
    }

    /// SUPG-stabilized convection-diffusion system (no boundary conditions
    /// applied yet).
    pub fn supg(
        &self,
        kappa: &TensorField,
        beta: &VectorField,
        f: &ScalarField,
        delta: SupgDelta,
    ) -> Result<AssembledSystem> {
        if !kappa.has_divergence() {
            return Err(Error::InvalidArgument(
                "SUPG needs the divergence of the diffusion tensor".into(),
            ));
        }
        let (rule, tab, geoms) = self.tables(2)?;
        let nb = tab.num_basis();
        let blocks = self.local_blocks(geoms.len(), |c| {
            let g = &geoms[c];
            let mut block = vec![0.0; nb * nb + nb];
            let mut grads = vec![[0.0; 2]; nb];
            let mut strong = vec![0.0; nb];
            let mut streamline = vec![0.0; nb];
            for (q, w) in rule.weights.iter().enumerate() {
                let jw = 2.0 * g.area * w;
                let x = g.physical(rule.points[q]);
                let k = kappa.eval(x);
                let divk = kappa.divergence(x).unwrap_or([0.0; 2]);
                let bv = beta.eval(x);
                let fv = f.eval(x);
                let d = match delta {
                    SupgDelta::Standard => g.diameter / (2.0 * dot2(bv, bv).sqrt().max(1e-12)),
                    SupgDelta::Fixed(d) => d,
                };
                for b in 0..nb {
                    grads[b] = tab.gradient(b, q, &g.grad_bary);
                    streamline[b] = dot2(bv, grads[b]);
                    let h = tab.hessian(b, q, &g.grad_bary);
                    let k_h = k[0][0] * h[0][0] + k[0][1] * h[0][1] + k[1][0] * h[1][0] + k[1][1] * h[1][1];
                    strong[b] = streamline[b] - (dot2(divk, grads[b]) + k_h);
                }
                for j in 0..nb {
                    let flux = mat_vec(k, grads[j]);
                    for i in 0..nb {
                        let galerkin = dot2(flux, grads[i]) + streamline[j] * tab.value(i, q);
                        let stab = d * strong[j] * streamline[i];
                        block[i * nb + j] += jw * (galerkin + stab);
                    }
                }
                for i in 0..nb {
                    block[nb * nb + i] += jw * fv * (tab.value(i, q) + d * streamline[i]);
                }
            }
            block
        });
        let mut rhs = vec![0.0; self.space.ndofs()];
        let mut t = Vec::with_capacity(blocks.len() * nb * nb);
        for (c, block) in blocks.iter().enumerate() {
            let dofs = self.space.cell_dofs(c);
            for i in 0..nb {
                rhs[dofs[i]] += block[nb * nb + i];
                for j in 0..nb {
                    t.push((dofs[i], dofs[j], block[i * nb + j]));
                }
            }
        }
        let n = self.space.ndofs();
        Ok(AssembledSystem::new(CsrMatrix::from_triplets(n, n, &t)?, rhs))
    }
}

pub fn assemble_mass(space: &FunctionSpace) -> Result<CsrMatrix> {
    Assembler::new(space).mass()
}

pub fn assemble_diffusion(space: &FunctionSpace, kappa: &TensorField) -> Result<CsrMatrix> {
    Assembler::new(space).diffusion(kappa)
}

pub fn assemble_convection(space: &FunctionSpace, beta: &VectorField) -> Result<CsrMatrix> {
    Assembler::new(space).convection(beta)
}

pub fn assemble_supg(
    space: &FunctionSpace,
    kappa: &TensorField,
    beta: &VectorField,
    f: &ScalarField,
) -> Result<AssembledSystem> {
    Assembler::new(space).supg(kappa, beta, f, SupgDelta::Standard)
}

pub fn assemble_load(
    space: &FunctionSpace,
    f: &ScalarField,
    neumann: Option<(BoundaryTag, &ScalarField)>,
) -> Result<Vec<f64>> {
    Assembler::new(space).load(f, neumann)
}

/// Dofs and values for piecewise-constant Dirichlet data given per tag.
pub fn dirichlet_data(space: &FunctionSpace, data: &[(BoundaryTag, f64)]) -> (Vec<usize>, Vec<f64>) {
    let mut map = std::collections::BTreeMap::new();
    for &(tag, value) in data {
        for d in space.dirichlet_dofs(&[tag]) {
            map.insert(d, value);
        }
    }
    map.into_iter().unzip()
}

/// Impose `x_d = value` for each `d` in `dofs`.
///
/// Symmetric matrices are eliminated symmetrically (known columns moved to
/// the right-hand side); otherwise the constrained rows are replaced by
/// identity rows. Either way constrained rows become `e_d^T x = value`, so
/// applying the same data twice changes nothing.
pub fn apply_dirichlet(system: &AssembledSystem, dofs: &[usize], values: &[f64]) -> Result<AssembledSystem> {
    if dofs.len() != values.len() {
        return Err(Error::DimensionMismatch("dofs and values differ in length".into()));
    }
    let n = system.matrix.nrows();
    if let Some(&d) = dofs.iter().find(|&&d| d >= n) {
        return Err(Error::InvalidArgument(format!("Dirichlet dof {d} out of range")));
    }
    let mut fixed = vec![None; n];
    for (&d, &v) in system.dirichlet_dofs.iter().zip(&system.dirichlet_values) {
        fixed[d] = Some(v);
    }
    for (&d, &v) in dofs.iter().zip(values) {
        fixed[d] = Some(v);
    }

    let symmetric = system.matrix.is_symmetric(1e-12);
    let mut matrix = system.matrix.clone();
    let mut rhs = system.rhs.clone();
    if symmetric {
        let row_ptr = matrix.row_ptr().to_vec();
        let cols = matrix.col_idx().to_vec();
        let vals = matrix.values_mut();
        for i in 0..n {
            if fixed[i].is_some() {
                continue;
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                if let Some(g) = fixed[cols[k]] {
                    rhs[i] -= vals[k] * g;
                    vals[k] = 0.0;
                }
            }
        }
    }
    for (i, g) in fixed.iter().enumerate() {
        if let Some(g) = g {
            matrix.set_identity_row(i);
            if matrix.get(i, i) != 1.0 {
                // Row had no stored diagonal; rebuild with one.
                let mut t = matrix.triplets();
                t.push((i, i, 1.0));
                matrix = CsrMatrix::from_triplets(n, n, &t)?;
            }
            rhs[i] = *g;
        }
    }
    let (dirichlet_dofs, dirichlet_values) = fixed
        .iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|g| (i, g)))
        .unzip();
    Ok(AssembledSystem {
        matrix,
        rhs,
        dirichlet_dofs,
        dirichlet_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainKind, DomainSpec, Mesh};
    use crate::space::build_space;
    use crate::sparse::{extract_submatrix, norm_inf, solve_linear};

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, n)).unwrap())
    }

    fn reference_triangle() -> Arc<Mesh> {
        Arc::new(Mesh::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], vec![]).unwrap())
    }

    #[test]
    fn mass_matrix_properties() {
        for k in 1..=3 {
            let s = build_space(square(3), k).unwrap();
            let m = assemble_mass(&s).unwrap();
            let total: f64 = m.values().iter().sum();
            assert!((total - 1.0).abs() < 1e-13);
            assert!(m.asymmetry() <= 1e-12);
            assert!(m.cholesky_succeeds());
        }
        let s = build_space(reference_triangle(), 1).unwrap();
        let m = assemble_mass(&s).unwrap();
        let area = 0.5;
        for i in 0..3 {
            for j in 0..3 {
                let e = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m.get(i, j) - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn reference_stiffness() {
        let s = build_space(reference_triangle(), 1).unwrap();
        let a = assemble_diffusion(&s, &TensorField::isotropic(1.0)).unwrap();
        let expect = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - 0.5 * expect[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn diffusion_kills_constants_and_is_symmetric() {
        let eps = 1e-4;
        let kappa = TensorField::new(move |[x, y]| {
            [[y * y + eps * x * x, -(1.0 - eps) * x * y], [-(1.0 - eps) * x * y, x * x + eps * y * y]]
        });
        let at = kappa.eval([1.0, 1.0]);
        assert!((at[0][0] - 1.0001).abs() < 1e-15 && (at[0][1] + 0.9999).abs() < 1e-15);
        for k in 1..=3 {
            let s = build_space(square(4), k).unwrap();
            let a = assemble_diffusion(&s, &kappa).unwrap();
            assert!(a.values().iter().all(|v| v.is_finite()));
            assert!(a.asymmetry() <= 1e-12);
            assert!(norm_inf(&a.matvec(&vec![1.0; s.ndofs()])) < 1e-12);
        }
    }

    #[test]
    fn convection_identities() {
        for k in 1..=3 {
            let s = build_space(square(4), k).unwrap();
            let c = assemble_convection(&s, &VectorField::constant([1.0, 0.0])).unwrap();
            assert!(norm_inf(&c.matvec(&vec![1.0; s.ndofs()])) < 1e-12);
            let x = s.interpolate(|p| p[0]);
            let total: f64 = c.matvec(&x.coeffs).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn convection_skew_on_interior() {
        // beta = (-y, x) about the square's center is divergence free and
        // tangent to circles; on interior dofs C + C^T vanishes.
        let beta = VectorField::new(|[x, y]| [-(y - 0.5), x - 0.5]);
        for k in 1..=3 {
            let s = build_space(square(4), k).unwrap();
            let c = assemble_convection(&s, &beta).unwrap();
            let boundary = s.dirichlet_dofs(&[BoundaryTag::Exterior]);
            let interior: Vec<usize> = (0..s.ndofs()).filter(|d| boundary.binary_search(d).is_err()).collect();
            let ci = extract_submatrix(&c, &interior, &interior);
            let sym = ci.add_scaled(1.0, &ci.transpose(), 1.0).unwrap();
            assert!(sym.max_abs() < 1e-13, "k={k}: {}", sym.max_abs());
        }
    }

    #[test]
    fn supg_consistency() {
        let kappa = TensorField::isotropic(0.01);
        let beta = VectorField::new(|[x, y]| [1.0 + y, 0.5 - x]);
        let f = ScalarField::constant(1.0);
        for k in 1..=3 {
            let s = build_space(square(3), k).unwrap();
            let asm = Assembler::new(&s);
            let sys = asm.supg(&kappa, &beta, &f, SupgDelta::Standard).unwrap();
            assert!(norm_inf(&sys.matrix.matvec(&vec![1.0; s.ndofs()])) < 1e-12);

            let plain = asm.supg(&kappa, &beta, &f, SupgDelta::Fixed(0.0)).unwrap();
            let galerkin = asm
                .diffusion(&kappa)
                .unwrap()
                .add_scaled(1.0, &asm.convection(&beta).unwrap(), 1.0)
                .unwrap();
            let diff = plain.matrix.add_scaled(1.0, &galerkin, -1.0).unwrap();
            assert!(diff.max_abs() <= 1e-14);
            let load = asm.load(&f, None).unwrap();
            for (a, b) in plain.rhs.iter().zip(&load) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn supg_pure_convection_stabilization_is_psd() {
        let s = build_space(square(3), 1).unwrap();
        let asm = Assembler::new(&s);
        let zero = TensorField::isotropic(0.0);
        let beta = VectorField::constant([1.0, 0.5]);
        let f = ScalarField::constant(0.0);
        let full = asm.supg(&zero, &beta, &f, SupgDelta::Standard).unwrap().matrix;
        let stab = full.add_scaled(1.0, &asm.convection(&beta).unwrap(), -1.0).unwrap();
        assert!(stab.asymmetry() < 1e-14);
        let shifted = stab.add_scaled(1.0, &CsrMatrix::identity(s.ndofs()), 1e-10).unwrap();
        assert!(shifted.cholesky_succeeds());
    }

    #[test]
    fn supg_needs_divergence() {
        let s = build_space(square(2), 1).unwrap();
        let kappa = TensorField::new(|_| [[1.0, 0.0], [0.0, 1.0]]);
        let r = assemble_supg(&s, &kappa, &VectorField::constant([1.0, 0.0]), &ScalarField::constant(0.0));
        assert!(r.is_err());
    }

    #[test]
    fn load_vectors() {
        for k in 1..=3 {
            let s = build_space(square(8), k).unwrap();
            let b = assemble_load(&s, &ScalarField::constant(1.0), None).unwrap();
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            let bump = ScalarField::new(|[x, y]| {
                let inside = |t: f64| (0.375..=0.625).contains(&t);
                if inside(x) && inside(y) {
                    1.0
                } else {
                    0.0
                }
            });
            let b = assemble_load(&s, &bump, None).unwrap();
            assert!((b.iter().sum::<f64>() - 1.0 / 16.0).abs() < 1e-13);
            let zero = ScalarField::constant(0.0);
            let b = assemble_load(&s, &zero, Some((BoundaryTag::Exterior, &ScalarField::constant(1.0)))).unwrap();
            assert!((b.iter().sum::<f64>() - 4.0).abs() < 1e-13);
            assert!(matches!(
                assemble_load(&s, &zero, Some((BoundaryTag::Hole, &ScalarField::constant(1.0)))),
                Err(Error::UnknownTag(BoundaryTag::Hole))
            ));
        }
    }

    #[test]
    fn dirichlet_everywhere() {
        let s = build_space(square(2), 2).unwrap();
        let a = assemble_diffusion(&s, &TensorField::isotropic(1.0)).unwrap();
        let sys = AssembledSystem::new(a, vec![0.3; s.ndofs()]);
        let all: Vec<usize> = (0..s.ndofs()).collect();
        let fixed = apply_dirichlet(&sys, &all, &vec![1.5; s.ndofs()]).unwrap();
        let x = solve_linear(&fixed.matrix, &fixed.rhs).unwrap();
        assert!(x.iter().all(|v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn harmonic_boundary_data_is_reproduced() {
        for k in 1..=3 {
            let s = build_space(square(4), k).unwrap();
            let a = assemble_diffusion(&s, &TensorField::isotropic(1.0)).unwrap();
            let exact = s.interpolate(|p| p[0]);
            let dofs = s.dirichlet_dofs(&[BoundaryTag::Exterior]);
            let vals: Vec<f64> = dofs.iter().map(|&d| exact.coeffs[d]).collect();
            let sys = apply_dirichlet(&AssembledSystem::new(a, vec![0.0; s.ndofs()]), &dofs, &vals).unwrap();
            assert!(sys.matrix.asymmetry() < 1e-12);
            let x = solve_linear(&sys.matrix, &sys.rhs).unwrap();
            for (a, b) in x.iter().zip(&exact.coeffs) {
                assert!((a - b).abs() < 1e-10);
            }
            let again = apply_dirichlet(&sys, &dofs, &vals).unwrap();
            assert_eq!(again.matrix.to_dense(), sys.matrix.to_dense());
            assert_eq!(again.rhs, sys.rhs);
        }
    }

    #[test]
    fn patch_test_with_constant_anisotropic_kappa() {
        let kappa = TensorField::new(|_| [[2.0, 0.3], [0.3, 1.0]]).with_divergence(|_| [0.0; 2]);
        for k in 1..=3 {
            let s = build_space(square(3), k).unwrap();
            // u = x^a y^b with a + b = k has -div(kappa grad u) polynomial;
            // use the load from the exact flux divergence.
            let u = move |[x, y]: Point| x.powi(k as i32) + x * y;
            let f = ScalarField::new(move |[x, y]| {
                let kk = k as f64;
                let uxx = if k >= 2 { kk * (kk - 1.0) * x.powi(k as i32 - 2) } else { 0.0 };
                -(2.0 * uxx + 2.0 * 0.3 * 1.0 + 1.0 * 0.0) + 0.0 * y
            });
            let asm = Assembler::new(&s);
            let a = asm.diffusion(&kappa).unwrap();
            let b = asm.load(&f, None).unwrap();
            let exact = s.interpolate(u);
            let dofs = s.dirichlet_dofs(&[BoundaryTag::Exterior]);
            let vals: Vec<f64> = dofs.iter().map(|&d| exact.coeffs[d]).collect();
            let sys = apply_dirichlet(&AssembledSystem::new(a, b), &dofs, &vals).unwrap();
            let free: Vec<usize> = (0..s.ndofs()).filter(|d| dofs.binary_search(d).is_err()).collect();
            assert!(extract_submatrix(&sys.matrix, &free, &free).cholesky_succeeds());
            let x = solve_linear(&sys.matrix, &sys.rhs).unwrap();
            for (a, b) in x.iter().zip(&exact.coeffs) {
                assert!((a - b).abs() < 1e-9, "k={k}");
            }
        }
    }

    #[test]
    fn parallel_assembly_matches_serial() {
        let s = build_space(square(6), 3).unwrap();
        let kappa = TensorField::new(|[x, y]| [[1.0 + x, y], [y, 2.0]]);
        let serial = Assembler::new(&s).diffusion(&kappa).unwrap();
        let par = Assembler::new(&s).parallel(true).diffusion(&kappa).unwrap();
        assert_eq!(serial, par);
    }
}
