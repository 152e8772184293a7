//! Structured 2D triangulations and per-cell geometry.
//!
//! Every square of an `n x n` grid is split along its lower-left to
//! upper-right diagonal into two counterclockwise right triangles. Boundary
//! facets are stored in the orientation of their owning cell, so the outward
//! normal of a facet `(a, b)` is the clockwise rotation of `b - a`.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Marker attached to boundary facets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Exterior,
    Hole,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKind {
    /// `[0, 1]^2`
    UnitSquare,
    /// `[0, 1]^2` minus the centered square `[4/9, 5/9]^2`
    SquareWithHole,
    /// `[-1/2, 1/2]^2`
    CenteredSquare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Cells per side of the background grid.
    pub n: usize,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, n: usize) -> Self {
        DomainSpec { kind, n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidMesh("subdivision count must be positive".into()));
        }
        if self.kind == DomainKind::SquareWithHole && self.n % 9 != 0 {
            return Err(Error::InvalidMesh(format!(
                "hole domain needs n divisible by 9 so the hole is grid aligned, got {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Exact area of the domain.
    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::UnitSquare | DomainKind::CenteredSquare => 1.0,
            DomainKind::SquareWithHole => 1.0 - 1.0 / 81.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Inflow/outflow classification of a boundary facet relative to a velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowClass {
    /// `beta . n < 0`
    Inflow,
    /// `beta . n >= 0`
    Outflow,
}

/// Affine data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Longest edge length.
    pub diameter: f64,
    /// Row `i` is the constant gradient of barycentric coordinate `b_i`.
    pub grad_bary: [[f64; 2]; 3],
}

impl CellGeometry {
    pub fn from_vertices(vertices: [Point; 3]) -> Option<Self> {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        if det <= 0.0 || !det.is_finite() {
            return None;
        }
        let grad_bary = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        let len = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let diameter = len(p0, p1).max(len(p1, p2)).max(len(p2, p0));
        Some(CellGeometry {
            vertices,
            area: 0.5 * det,
            diameter,
            grad_bary,
        })
    }

    /// Barycentric coordinates of `p` (may be negative outside the cell).
    pub fn barycentric(&self, p: Point) -> [f64; 3] {
        let v0 = self.vertices[0];
        let d = [p[0] - v0[0], p[1] - v0[1]];
        let g = &self.grad_bary;
        let b1 = g[1][0] * d[0] + g[1][1] * d[1];
        let b2 = g[2][0] * d[0] + g[2][1] * d[1];
        [1.0 - b1 - b2, b1, b2]
    }

    pub fn physical(&self, bary: [f64; 3]) -> Point {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }
}

/// A conforming triangulation together with its edge topology.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary_facets: Vec<BoundaryFacet>,
    edges: Vec<[usize; 2]>,
    cell_edges: Vec<[usize; 3]>,
    edge_index: HashMap<[usize; 2], usize>,
}

/// Local edge `i` of a cell is the one opposite local vertex `i`.
pub const LOCAL_EDGES: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

impl Mesh {
    /// Assemble a mesh from raw arrays and derive the edge topology.
    ///
    /// Fails on out-of-range indices, non-positive cell areas, or boundary
    /// facets that are not edges with exactly one incident cell.
    pub fn from_parts(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        boundary_facets: Vec<BoundaryFacet>,
    ) -> Result<Self> {
        let nv = vertices.len();
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("cell {c} references a missing vertex")));
            }
            let g = [vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]];
            if CellGeometry::from_vertices(g).is_none() {
                let [p0, p1, p2] = g;
                let area = 0.5
                    * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
                return Err(Error::DegenerateCell { cell: c, area });
            }
        }

        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        let mut edge_cells: Vec<usize> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for cell in &cells {
            let mut ce = [0; 3];
            for (le, [a, b]) in LOCAL_EDGES.iter().enumerate() {
                let key = sorted_pair(cell[*a], cell[*b]);
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_cells.push(0);
                    edges.len() - 1
                });
                edge_cells[id] += 1;
                ce[le] = id;
            }
            cell_edges.push(ce);
        }
        if let Some(e) = edge_cells.iter().position(|&c| c > 2) {
            return Err(Error::InvalidMesh(format!("edge {:?} has more than two cells", edges[e])));
        }
        for f in &boundary_facets {
            let key = sorted_pair(f.vertices[0], f.vertices[1]);
            match edge_index.get(&key) {
                Some(&e) if edge_cells[e] == 1 => {}
                _ => {
                    return Err(Error::InvalidMesh(format!(
                        "facet {:?} is not a boundary edge",
                        f.vertices
                    )))
                }
            }
        }

        Ok(Mesh {
            vertices,
            cells,
            boundary_facets,
            edges,
            cell_edges,
            edge_index,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    /// Unique edges, each stored with ascending vertex ids.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&sorted_pair(a, b)).copied()
    }

    pub fn cell_geometry(&self, cell: usize) -> Result<CellGeometry> {
        let c = self.cells.get(cell).ok_or(Error::CellOutOfRange(cell))?;
        let v = [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]];
        CellGeometry::from_vertices(v).ok_or(Error::DegenerateCell { cell, area: 0.0 })
    }

    /// Geometry of every cell, in cell order.
    pub fn geometries(&self) -> Vec<CellGeometry> {
        (0..self.num_cells())
            .map(|c| self.cell_geometry(c).expect("validated at construction"))
            .collect()
    }

    /// Largest cell diameter `h`.
    pub fn max_diameter(&self) -> f64 {
        self.geometries().iter().map(|g| g.diameter).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.geometries().iter().map(|g| g.area).sum()
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary_facets.iter().any(|f| f.tag == tag)
    }

    /// Unit outward normal and length of a boundary facet.
    pub fn facet_normal(&self, facet: &BoundaryFacet) -> ([f64; 2], f64) {
        let a = self.vertices[facet.vertices[0]];
        let b = self.vertices[facet.vertices[1]];
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        ([d[1] / len, -d[0] / len], len)
    }

    /// Classify a facet by the sign of `beta . n` at its midpoint.
    pub fn classify_facet(&self, facet: &BoundaryFacet, beta: impl Fn(Point) -> [f64; 2]) -> FlowClass {
        let a = self.vertices[facet.vertices[0]];
        let b = self.vertices[facet.vertices[1]];
        let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let (n, _) = self.facet_normal(facet);
        let v = beta(mid);
        if v[0] * n[0] + v[1] * n[1] < 0.0 {
            FlowClass::Inflow
        } else {
            FlowClass::Outflow
        }
    }

    /// Locate a cell containing `p` and return it with `p`'s barycentric
    /// coordinates, accepting points up to `tol` outside a cell.
    pub fn locate(&self, p: Point, tol: f64) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for c in 0..self.num_cells() {
            let g = self.cell_geometry(c).ok()?;
            let b = g.barycentric(p);
            let worst = b.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= 0.0 {
                return Some((c, b));
            }
            if worst >= -tol && best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((c, b, worst));
            }
        }
        best.map(|(c, b, _)| (c, b))
    }
}

/// Build one of the structured experiment meshes.
pub fn build_mesh(spec: DomainSpec) -> Result<Mesh> {
    spec.validate()?;
    let n = spec.n;
    let (x0, side) = match spec.kind {
        DomainKind::CenteredSquare => (-0.5, 1.0),
        _ => (0.0, 1.0),
    };
    let hole = match spec.kind {
        DomainKind::SquareWithHole => Some((4 * n / 9, 5 * n / 9)),
        _ => None,
    };
    let in_hole = |i: usize, j: usize| hole.is_some_and(|(lo, hi)| i >= lo && i < hi && j >= lo && j < hi);

    let grid_id = |i: usize, j: usize| j * (n + 1) + i;
    let h = side / n as f64;
    let mut used = vec![false; (n + 1) * (n + 1)];
    let mut grid_cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            if in_hole(i, j) {
                continue;
            }
            let v00 = grid_id(i, j);
            let v10 = grid_id(i + 1, j);
            let v01 = grid_id(i, j + 1);
            let v11 = grid_id(i + 1, j + 1);
            grid_cells.push([v00, v10, v11]);
            grid_cells.push([v00, v11, v01]);
            for v in [v00, v10, v01, v11] {
                used[v] = true;
            }
        }
    }

    // Drop vertices strictly inside the hole and renumber compactly.
    let mut renumber = vec![usize::MAX; used.len()];
    let mut vertices = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let g = grid_id(i, j);
            if used[g] {
                renumber[g] = vertices.len();
                vertices.push([x0 + i as f64 * h, x0 + j as f64 * h]);
            }
        }
    }
    let cells: Vec<[usize; 3]> = grid_cells
        .iter()
        .map(|c| [renumber[c[0]], renumber[c[1]], renumber[c[2]]])
        .collect();

    let x1 = x0 + side;
    let on_outer = |p: Point, q: Point| {
        let same = |a: f64, b: f64, v: f64| (a - v).abs() < 1e-12 && (b - v).abs() < 1e-12;
        same(p[0], q[0], x0) || same(p[0], q[0], x1) || same(p[1], q[1], x0) || same(p[1], q[1], x1)
    };
    let facets = boundary_edges(&cells)
        .into_iter()
        .map(|[a, b]| {
            let tag = if on_outer(vertices[a], vertices[b]) {
                BoundaryTag::Exterior
            } else {
                BoundaryTag::Hole
            };
            BoundaryFacet { vertices: [a, b], tag }
        })
        .collect();
    Mesh::from_parts(vertices, cells, facets)
}

/// Edges with one incident cell, oriented as in that cell.
fn boundary_edges(cells: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<[usize; 2], (usize, [usize; 2])> = HashMap::new();
    let mut order = Vec::new();
    for cell in cells {
        for [a, b] in [[0, 1], [1, 2], [2, 0]] {
            let oriented = [cell[a], cell[b]];
            let key = sorted_pair(oriented[0], oriented[1]);
            let entry = count.entry(key).or_insert_with(|| {
                order.push(key);
                (0, oriented)
            });
            entry.0 += 1;
        }
    }
    order
        .into_iter()
        .filter_map(|k| {
            let (c, oriented) = count[&k];
            (c == 1).then_some(oriented)
        })
        .collect()
}

/// Split every triangle into four congruent children through its edge
/// midpoints. Boundary tags are inherited by both halves of a facet.
pub fn refine_uniform(mesh: &Mesh) -> Mesh {
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    for &[a, b] in &mesh.edges {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
    }
    let mid = |a: usize, b: usize| nv + mesh.edge_id(a, b).expect("edge exists");

    let mut cells = Vec::with_capacity(4 * mesh.num_cells());
    for &[v0, v1, v2] in &mesh.cells {
        let m0 = mid(v1, v2);
        let m1 = mid(v0, v2);
        let m2 = mid(v0, v1);
        cells.push([v0, m2, m1]);
        cells.push([m2, v1, m0]);
        cells.push([m1, m0, v2]);
        cells.push([m0, m1, m2]);
    }
    let facets = mesh
        .boundary_facets
        .iter()
        .flat_map(|f| {
            let [a, b] = f.vertices;
            let m = mid(a, b);
            [
                BoundaryFacet { vertices: [a, m], tag: f.tag },
                BoundaryFacet { vertices: [m, b], tag: f.tag },
            ]
        })
        .collect();
    Mesh::from_parts(vertices, cells, facets).expect("refinement preserves validity")
}
