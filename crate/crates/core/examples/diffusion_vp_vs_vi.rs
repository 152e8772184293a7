//! Anisotropic diffusion with a manufactured solution, solved once as a
//! plain linear system and once with nonnegative coefficients.
//!
//! Usage: `cargo run --example diffusion_vp_vs_vi -- [degree] [n]`

use std::sync::Arc;

use bernstein_vi::approx::error_norms;
use bernstein_vi::benchmarks::{mms_diffusion, mms_exact, mms_gradient};
use bernstein_vi::experiments::{solve_steady, SolverKind};
use bernstein_vi::mesh::build_mesh;
use bernstein_vi::space::FunctionSpace;
use bernstein_vi::vi::ViOptions;

fn main() -> bernstein_vi::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);

    let problem = mms_diffusion().on_mesh(n);
    let space = FunctionSpace::new(Arc::new(build_mesh(problem.domain)?), k)?;
    println!("k = {k}, n = {n}, {} dofs", space.ndofs());

    for solver in [SolverKind::Vp, SolverKind::Vi] {
        let sol = solve_steady(&problem, &space, solver, &ViOptions::default(), false)?;
        let e = error_norms(&sol.u, mms_exact, mms_gradient, &problem.kappa)?;
        print!(
            "{solver}: L2 {:.4e}  H1 {:.4e}  energy {:.4e}  min coefficient {:+.3e}",
            e.l2,
            e.h1_semi,
            e.energy,
            sol.u.min_coeff()
        );
        match &sol.report {
            Some(r) => println!("  ({} active, {} iterations)", r.active_lower.len(), r.iterations),
            None => println!(),
        }
    }
    Ok(())
}
