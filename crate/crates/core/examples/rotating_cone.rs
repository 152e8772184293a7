//! One full turn of a cone under solid-body rotation, with and without the
//! [0, 1] bounds. A coarse mesh keeps this quick; the CLI runs n = 32.

use bernstein_vi::experiments::{run_rotating_cone, Experiment, RunConfig, SolverKind};

fn main() -> bernstein_vi::Result<()> {
    let config = RunConfig::new(Experiment::Cone);
    let summary = run_rotating_cone(1, 16, &[SolverKind::Vp, SolverKind::Vi], &config)?;
    print!("{summary}");
    if let Some(vp) = summary.run(SolverKind::Vp) {
        match vp.first_exit {
            Some(step) => println!("unconstrained run leaves [0, 1] at step {step}"),
            None => println!("unconstrained run stays in [0, 1]"),
        }
    }
    Ok(())
}
