//! Bernstein basis on a triangle: partition of unity, the control-net
//! certificate, and how dofs are shared across a small mesh.

use std::sync::Arc;

use bernstein_vi::bernstein::{bernstein_value, coefficient_box_certificate, enumerate_multiindices, local_dimension};
use bernstein_vi::mesh::{build_mesh, DomainKind, DomainSpec};
use bernstein_vi::space::FunctionSpace;

fn main() -> bernstein_vi::Result<()> {
    let bary = [0.2, 0.3, 0.5];
    for k in 1..=3 {
        let sum: f64 = enumerate_multiindices(k).into_iter().map(|a| bernstein_value(a, bary)).sum();
        println!("degree {k}: {} basis functions, sum at {bary:?} = {sum:.15}", local_dimension(k));
    }

    // B_0 - 0.9 B_1 + B_2 stays positive on [0, 1] although its middle
    // coefficient is negative.
    let coeffs = [1.0, -0.9, 1.0];
    let p = |x: f64| coeffs[0] * (1.0 - x).powi(2) + coeffs[1] * 2.0 * x * (1.0 - x) + coeffs[2] * x * x;
    println!(
        "quadratic: certificate for [0, 1] = {}, value at 1/2 = {:.3}",
        coefficient_box_certificate(&coeffs, 0.0, 1.0),
        p(0.5)
    );

    let mesh = Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, 4))?);
    println!("4x4 mesh: {} vertices, {} edges, {} cells", mesh.num_vertices(), mesh.num_edges(), mesh.num_cells());
    for k in 1..=3 {
        let space = FunctionSpace::new(mesh.clone(), k)?;
        println!("  P{k}: {} global dofs, cell 0 dofs {:?}", space.ndofs(), space.cell_dofs(0));
    }
    Ok(())
}
