//! Continuous Bernstein finite element spaces.
//!
//! Global numbering: vertex dofs first (dof id = vertex id), then `k - 1`
//! dofs per edge ordered from the lower to the higher global vertex id, then
//! `(k - 1)(k - 2) / 2` interior dofs per cell in multi-index order.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use faer::prelude::*;

use crate::bernstein::{bernstein_value, enumerate_multiindices, MultiIndex};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, Point};

/// Mesh entity carrying a dof.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofEntity {
    Vertex(usize),
    Edge(usize),
    Cell(usize),
}

#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    cell_dofs: Vec<Vec<usize>>,
    dof_entity: Vec<DofEntity>,
    indices: Vec<MultiIndex>,
}

impl FunctionSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Arc<Self>> {
        if !(1..=3).contains(&degree) {
            return Err(Error::UnsupportedDegree(degree));
        }
        let k = degree;
        let nv = mesh.num_vertices();
        let ne = mesh.num_edges();
        let per_edge = k - 1;
        let per_cell = (k - 1) * (k.saturating_sub(2)) / 2;
        let indices = enumerate_multiindices(k);
        let interior: Vec<usize> = indices
            .iter()
            .enumerate()
            .filter(|(_, a)| a.support_size() == 3)
            .map(|(i, _)| i)
            .collect();

        let mut dof_entity: Vec<DofEntity> = (0..nv).map(DofEntity::Vertex).collect();
        for e in 0..ne {
            dof_entity.extend(std::iter::repeat_n(DofEntity::Edge(e), per_edge));
        }
        for c in 0..mesh.num_cells() {
            dof_entity.extend(std::iter::repeat_n(DofEntity::Cell(c), per_cell));
        }

        let mut cell_dofs = Vec::with_capacity(mesh.num_cells());
        for (c, cell) in mesh.cells().iter().enumerate() {
            let mut dofs = Vec::with_capacity(indices.len());
            for (li, alpha) in indices.iter().enumerate() {
                let a = alpha.0;
                let nz: Vec<usize> = (0..3).filter(|&i| a[i] > 0).collect();
                let dof = match nz.len() {
                    1 => cell[nz[0]],
                    2 => {
                        let (i, j) = (nz[0], nz[1]);
                        let e = mesh.edge_id(cell[i], cell[j]).expect("cell edge exists");
                        let hi = if cell[i] > cell[j] { i } else { j };
                        nv + e * per_edge + (a[hi] - 1)
                    }
                    _ => {
                        let pos = interior.iter().position(|&x| x == li).expect("interior index");
                        nv + ne * per_edge + c * per_cell + pos
                    }
                };
                dofs.push(dof);
            }
            cell_dofs.push(dofs);
        }

        Ok(Arc::new(FunctionSpace {
            mesh,
            degree,
            cell_dofs,
            dof_entity,
            indices,
        }))
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ndofs(&self) -> usize {
        self.dof_entity.len()
    }

    /// Global dofs of `cell`, one per local multi-index.
    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_dofs[cell]
    }

    pub fn dof_entity(&self, dof: usize) -> DofEntity {
        self.dof_entity[dof]
    }

    pub fn local_indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Dofs on facets carrying one of `tags`, sorted ascending.
    pub fn dirichlet_dofs(&self, tags: &[BoundaryTag]) -> Vec<usize> {
        let nv = self.mesh.num_vertices();
        let per_edge = self.degree - 1;
        let mut set = BTreeSet::new();
        for f in self.mesh.boundary_facets() {
            if !tags.contains(&f.tag) {
                continue;
            }
            let [a, b] = f.vertices;
            set.insert(a);
            set.insert(b);
            let e = self.mesh.edge_id(a, b).expect("facet is an edge");
            set.extend((0..per_edge).map(|j| nv + e * per_edge + j));
        }
        set.into_iter().collect()
    }

    /// Physical coordinates of the Bernstein lattice point of every dof.
    pub fn dof_points(&self) -> Vec<Point> {
        let mut pts = vec![[0.0; 2]; self.ndofs()];
        for c in 0..self.mesh.num_cells() {
            let g = self.mesh.cell_geometry(c).expect("valid mesh");
            for (li, &dof) in self.cell_dofs[c].iter().enumerate() {
                pts[dof] = g.physical(self.indices[li].lattice_point());
            }
        }
        pts
    }

    /// Degree-`k` Lagrange interpolant of `field`, expressed in Bernstein
    /// coefficients. Exact for polynomials of degree at most `k`.
    pub fn interpolate(self: &Arc<Self>, field: impl Fn(Point) -> f64) -> FEFunction {
        let lattice: Vec<[f64; 3]> = self.indices.iter().map(|a| a.lattice_point()).collect();
        let nb = lattice.len();
        let vandermonde = Mat::<f64>::from_fn(nb, nb, |p, b| bernstein_value(self.indices[b], lattice[p]));
        let lu = vandermonde.partial_piv_lu();
        let mut coeffs = vec![0.0; self.ndofs()];
        for c in 0..self.mesh.num_cells() {
            let g = self.mesh.cell_geometry(c).expect("valid mesh");
            let rhs = Mat::<f64>::from_fn(nb, 1, |p, _| field(g.physical(lattice[p])));
            let local = lu.solve(&rhs);
            for (li, &dof) in self.cell_dofs[c].iter().enumerate() {
                coeffs[dof] = local[(li, 0)];
            }
        }
        FEFunction::new(self.clone(), coeffs).expect("length matches")
    }

    pub fn zero_function(self: &Arc<Self>) -> FEFunction {
        FEFunction::new(self.clone(), vec![0.0; self.ndofs()]).expect("length matches")
    }
}

/// Build the degree-`k` space over `mesh`.
pub fn build_space(mesh: Arc<Mesh>, k: usize) -> Result<Arc<FunctionSpace>> {
    FunctionSpace::new(mesh, k)
}

/// A member of a [`FunctionSpace`], stored by its global Bernstein
/// coefficients.
#[derive(Clone, Debug)]
pub struct FEFunction {
    space: Arc<FunctionSpace>,
    pub coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.ndofs() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for a space with {} dofs",
                coeffs.len(),
                space.ndofs()
            )));
        }
        Ok(FEFunction { space, coeffs })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    /// Local Bernstein coefficients on `cell`.
    pub fn cell_coeffs(&self, cell: usize) -> Vec<f64> {
        self.space.cell_dofs(cell).iter().map(|&d| self.coeffs[d]).collect()
    }

    /// Value at a barycentric point of `cell`.
    pub fn evaluate_in_cell(&self, cell: usize, bary: [f64; 3]) -> f64 {
        self.space
            .cell_dofs(cell)
            .iter()
            .zip(self.space.local_indices())
            .map(|(&d, a)| self.coeffs[d] * bernstein_value(*a, bary))
            .sum()
    }

    /// Value at a physical point; points up to `1e-10` outside a cell are
    /// accepted.
    pub fn evaluate(&self, p: Point) -> Result<f64> {
        let (cell, bary) = self
            .space
            .mesh()
            .locate(p, 1e-10)
            .ok_or(Error::PointOutsideMesh(p[0], p[1]))?;
        Ok(self.evaluate_in_cell(cell, bary))
    }

    pub fn min_coeff(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `self - other` on the same space.
    pub fn difference(&self, other: &FEFunction) -> Result<FEFunction> {
        if !Arc::ptr_eq(&self.space, &other.space) && self.coeffs.len() != other.coeffs.len() {
            return Err(Error::DimensionMismatch("functions live on different spaces".into()));
        }
        let c = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        FEFunction::new(self.space.clone(), c)
    }

    /// Write `dof,value` rows with a header line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["dof", "value"])?;
        for (i, v) in self.coeffs.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:.17e}")])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    pub fn read_csv(space: Arc<FunctionSpace>, path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let mut coeffs = vec![f64::NAN; space.ndofs()];
        for rec in r.records() {
            let rec = rec?;
            let dof: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad dof id {:?}", &rec[0])))?;
            let v: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {:?}", &rec[1])))?;
            *coeffs
                .get_mut(dof)
                .ok_or_else(|| Error::InvalidArgument(format!("dof {dof} out of range")))? = v;
        }
        FEFunction::new(space, coeffs)
    }
}

/// Per-dof lower and upper bounds on Bernstein coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsBox {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl BoundsBox {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        if lb.len() != ub.len() {
            return Err(Error::DimensionMismatch("lower and upper bounds differ in length".into()));
        }
        if let Some(i) = (0..lb.len()).find(|&i| !(lb[i] <= ub[i]) || lb[i].is_nan()) {
            return Err(Error::InvalidBounds(format!("lb[{i}] = {} > ub[{i}] = {}", lb[i], ub[i])));
        }
        Ok(BoundsBox { lb, ub })
    }

    pub fn uniform(n: usize, lb: f64, ub: f64) -> Result<Self> {
        Self::new(vec![lb; n], vec![ub; n])
    }

    pub fn unbounded(n: usize) -> Self {
        BoundsBox {
            lb: vec![f64::NEG_INFINITY; n],
            ub: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lb.is_empty()
    }

    /// Pin `dofs` to `values` (lb = ub = value).
    pub fn with_fixed(mut self, dofs: &[usize], values: &[f64]) -> Self {
        for (&d, &v) in dofs.iter().zip(values) {
            self.lb[d] = v;
            self.ub[d] = v;
        }
        self
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.max(self.lb[i]).min(self.ub[i]);
        }
    }

    /// Whether `x` lies in the box up to `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lb[i] - tol && v <= self.ub[i] + tol)
    }

    /// Largest violation of the box by `x` (zero when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (self.lb[i] - v).max(v - self.ub[i]).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, DomainKind, DomainSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, n)).unwrap())
    }

    #[test]
    fn dof_counts() {
        let m = square(2);
        assert_eq!(build_space(m.clone(), 1).unwrap().ndofs(), 9);
        assert_eq!(build_space(m.clone(), 2).unwrap().ndofs(), 25);
        assert_eq!(build_space(m.clone(), 3).unwrap().ndofs(), 49);
        assert!(matches!(build_space(m, 4), Err(Error::UnsupportedDegree(4))));
        let hole = Arc::new(build_mesh(DomainSpec::new(DomainKind::SquareWithHole, 18)).unwrap());
        for k in 1..=3 {
            let s = build_space(hole.clone(), k).unwrap();
            let expect = hole.num_vertices()
                + (k - 1) * hole.num_edges()
                + (k - 1) * (k.saturating_sub(2)) / 2 * hole.num_cells();
            assert_eq!(s.ndofs(), expect);
        }
    }

    #[test]
    fn every_dof_is_used() {
        let s = build_space(square(3), 3).unwrap();
        let mut hit = vec![false; s.ndofs()];
        for c in 0..s.mesh().num_cells() {
            for &d in s.cell_dofs(c) {
                hit[d] = true;
            }
        }
        assert!(hit.into_iter().all(|h| h));
    }

    #[test]
    fn dirichlet_counts() {
        let m = square(2);
        assert_eq!(build_space(m.clone(), 1).unwrap().dirichlet_dofs(&[BoundaryTag::Exterior]).len(), 8);
        assert_eq!(build_space(m.clone(), 2).unwrap().dirichlet_dofs(&[BoundaryTag::Exterior]).len(), 16);
        assert!(build_space(m, 2).unwrap().dirichlet_dofs(&[BoundaryTag::Hole]).is_empty());

        let hole = Arc::new(build_mesh(DomainSpec::new(DomainKind::SquareWithHole, 9)).unwrap());
        let s = build_space(hole, 2).unwrap();
        let inner = s.dirichlet_dofs(&[BoundaryTag::Hole]);
        assert_eq!(inner.len(), 8);
        let pts = s.dof_points();
        for d in inner {
            let [x, y] = pts[d];
            assert!((4.0 / 9.0 - 1e-12..=5.0 / 9.0 + 1e-12).contains(&x));
            assert!((4.0 / 9.0 - 1e-12..=5.0 / 9.0 + 1e-12).contains(&y));
        }
    }

    #[test]
    fn dirichlet_and_free_partition() {
        let s = build_space(square(4), 3).unwrap();
        let d = s.dirichlet_dofs(&[BoundaryTag::Exterior]);
        let pts = s.dof_points();
        let on_boundary = |p: Point| p.iter().any(|&c| c.abs() < 1e-12 || (c - 1.0).abs() < 1e-12);
        for i in 0..s.ndofs() {
            assert_eq!(d.binary_search(&i).is_ok(), on_boundary(pts[i]), "dof {i}");
        }
    }

    #[test]
    fn evaluation_basics() {
        let s = build_space(square(3), 2).unwrap();
        let f = FEFunction::new(s.clone(), vec![2.5; s.ndofs()]).unwrap();
        assert!((f.evaluate([0.31, 0.77]).unwrap() - 2.5).abs() < 1e-14);
        assert!(matches!(f.evaluate([2.0, 0.0]), Err(Error::PointOutsideMesh(..))));

        let s1 = build_space(square(3), 1).unwrap();
        let vals: Vec<f64> = (0..s1.ndofs()).map(|i| (i * i) as f64 * 0.1).collect();
        let f1 = FEFunction::new(s1.clone(), vals.clone()).unwrap();
        let g = s1.mesh().cell_geometry(4).unwrap();
        let bc = g.physical([1.0 / 3.0; 3]);
        let mean: f64 = s1.mesh().cells()[4].iter().map(|&v| vals[v]).sum::<f64>() / 3.0;
        assert!((f1.evaluate(bc).unwrap() - mean).abs() < 1e-13);
    }

    #[test]
    fn quadratic_edge_with_negative_coefficient() {
        // Coefficients (1, -0.9, 1) along the bottom edge of the unit square.
        let s = build_space(square(1), 2).unwrap();
        let mesh = s.mesh();
        let v0 = mesh.vertices().iter().position(|v| *v == [0.0, 0.0]).unwrap();
        let v1 = mesh.vertices().iter().position(|v| *v == [1.0, 0.0]).unwrap();
        let e = mesh.edge_id(v0, v1).unwrap();
        let mut c = vec![0.0; s.ndofs()];
        c[v0] = 1.0;
        c[v1] = 1.0;
        c[mesh.num_vertices() + e] = -0.9;
        let f = FEFunction::new(s, c).unwrap();
        assert!((f.evaluate([0.5, 0.0]).unwrap() - 0.05).abs() < 1e-14);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let mesh = square(3);
        let one = build_space(mesh.clone(), 2).unwrap().interpolate(|_| 1.0);
        assert!(one.coeffs.iter().all(|&c| (c - 1.0).abs() < 1e-14));

        let s1 = build_space(mesh.clone(), 1).unwrap();
        let x = s1.interpolate(|p| p[0]);
        for (v, p) in mesh.vertices().iter().enumerate() {
            assert!((x.coeffs[v] - p[0]).abs() < 1e-14);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for k in 1..=3 {
            let s = build_space(mesh.clone(), k).unwrap();
            for a in 0..=k {
                for b in 0..=(k - a) {
                    let f = s.interpolate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    for _ in 0..50 {
                        let p = [rng.gen::<f64>(), rng.gen::<f64>()];
                        let exact = p[0].powi(a as i32) * p[1].powi(b as i32);
                        assert!((f.evaluate(p).unwrap() - exact).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn continuity_across_interior_edges() {
        let mesh = Arc::new(build_mesh(DomainSpec::new(DomainKind::SquareWithHole, 9)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 1..=3 {
            let s = build_space(mesh.clone(), k).unwrap();
            let coeffs: Vec<f64> = (0..s.ndofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = FEFunction::new(s.clone(), coeffs).unwrap();
            let mut owners: std::collections::HashMap<usize, Vec<usize>> = Default::default();
            for (c, ce) in mesh.cell_edges().iter().enumerate() {
                for &e in ce {
                    owners.entry(e).or_default().push(c);
                }
            }
            for (e, cells) in owners.iter().filter(|(_, c)| c.len() == 2) {
                let [a, b] = mesh.edges()[*e];
                for _ in 0..50 {
                    let t: f64 = rng.gen();
                    let pa = mesh.vertices()[a];
                    let pb = mesh.vertices()[b];
                    let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                    let vals: Vec<f64> = cells
                        .iter()
                        .map(|&c| {
                            let g = mesh.cell_geometry(c).unwrap();
                            f.evaluate_in_cell(c, g.barycentric(p))
                        })
                        .collect();
                    assert!((vals[0] - vals[1]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn coefficient_csv_round_trip() {
        let s = build_space(square(2), 2).unwrap();
        let f = s.interpolate(|p| (p[0] * 3.0).sin() + p[1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("coeffs.csv");
        f.write_csv(&path).unwrap();
        let g = FEFunction::read_csv(s, &path).unwrap();
        assert_eq!(f.coeffs, g.coeffs);
    }

    #[test]
    fn bounds_box_validation() {
        assert!(BoundsBox::new(vec![1.0], vec![0.0]).is_err());
        let b = BoundsBox::uniform(3, 0.0, 1.0).unwrap().with_fixed(&[1], &[0.5]);
        assert_eq!((b.lb[1], b.ub[1]), (0.5, 0.5));
        let mut x = vec![-1.0, 2.0, 0.3];
        b.clamp(&mut x);
        assert_eq!(x, vec![0.0, 0.5, 0.3]);
        assert!(b.contains(&x, 0.0));
        assert_eq!(b.violation(&[1.5, 0.5, 0.0]), 0.5);
    }
}
