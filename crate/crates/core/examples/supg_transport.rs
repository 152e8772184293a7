//! Stabilized convection-diffusion around a hole held at one, with the
//! exterior held at zero. Only the VP is used for cubics since the VI is
//! known to stall there.

use bernstein_vi::experiments::{run_supg_benchmark, supg_mesh_size, Experiment, RunConfig, SolverKind};

fn main() -> bernstein_vi::Result<()> {
    let n = supg_mesh_size(false);
    let mut config = RunConfig::new(Experiment::Supg);
    let summary = run_supg_benchmark(1, n, &config)?;
    print!("{summary}");
    if let Some(r) = &summary.vi_report {
        for it in r.history.iter().take(5) {
            println!("    iteration {:>2}: {:>4} at lower bound, residual {:.3e}", it.iteration, it.active_lower, it.residual);
        }
    }

    config.solver = SolverKind::Vp;
    print!("{}", run_supg_benchmark(3, n, &config)?);
    Ok(())
}
