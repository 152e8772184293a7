//! Discontinuous source: the linear solve undershoots zero, the VI does not.
//! Pass an output directory to get a VTK file with both solutions.

use std::path::PathBuf;

use bernstein_vi::experiments::{run_rough_forcing, Experiment, RunConfig};

fn main() -> bernstein_vi::Result<()> {
    let mut config = RunConfig::new(Experiment::Rough);
    config.out = std::env::args().nth(1).map(PathBuf::from);
    for k in 1..=3 {
        let summary = run_rough_forcing(k, 16, &config)?;
        print!("{summary}");
    }
    Ok(())
}
