//! Transient diffusion of a bump with a strong sink, marched by backward
//! Euler with and without the nonnegativity constraint.

use std::sync::Arc;

use bernstein_vi::assembly::{ScalarField, TensorField, VectorField};
use bernstein_vi::mesh::{build_mesh, BoundaryTag, DomainKind, DomainSpec};
use bernstein_vi::space::{BoundsBox, FunctionSpace};
use bernstein_vi::time::{run_transient, Scheme, TimeGrid, TransientSetup};
use bernstein_vi::vi::{constrained_l2_projection, ViOptions};

fn main() -> bernstein_vi::Result<()> {
    let mesh = Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, 12))?);
    let space = FunctionSpace::new(mesh, 2)?;
    let n = space.ndofs();
    let bump = |[x, y]: [f64; 2]| (-60.0 * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp();
    let (u0, _) = constrained_l2_projection(&space, ScalarField::new(bump), &BoundsBox::uniform(n, 0.0, 1.0)?, &ViOptions::default())?;

    let mut setup = TransientSetup {
        kappa: TensorField::isotropic(1e-2),
        beta: VectorField::constant([0.0, 0.0]),
        forcing: Some(Arc::new(|_, [x, _]| if x < 0.3 { -2.0 } else { 0.0 })),
        dirichlet: vec![(BoundaryTag::Exterior, 0.0)],
        bounds: None,
        grid: TimeGrid::new(0.2, 0.01)?,
        scheme: Scheme::BackwardEuler,
        snapshot_every: 5,
        vi_options: ViOptions::default(),
        parallel_assembly: true,
    };
    let free = run_transient(&u0, &setup)?;
    setup.bounds = Some(BoundsBox::uniform(n, 0.0, f64::INFINITY)?);
    let bounded = run_transient(&u0, &setup)?;

    println!("{:>5} {:>8} {:>14} {:>14}", "step", "t", "min (free)", "min (bounded)");
    for (a, b) in free.stats.iter().zip(&bounded.stats).step_by(4) {
        println!("{:>5} {:>8.3} {:>14.4e} {:>14.4e}", a.step, a.time, a.min_coeff, b.min_coeff);
    }
    println!("kept {} snapshots", bounded.snapshots.len());
    Ok(())
}
