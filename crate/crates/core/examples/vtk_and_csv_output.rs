//! Writing solutions for external viewers: a VTK file with several point
//! fields, a coefficient CSV that round-trips, and a convergence table.

use std::path::PathBuf;
use std::sync::Arc;

use bernstein_vi::experiments::{read_csv, run_mms_degree, write_vtk, Experiment, RunConfig};
use bernstein_vi::mesh::{build_mesh, DomainKind, DomainSpec};
use bernstein_vi::space::{FEFunction, FunctionSpace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir).join("bvi-output-demo");
    std::fs::create_dir_all(&dir)?;

    let mesh = Arc::new(build_mesh(DomainSpec::new(DomainKind::SquareWithHole, 9))?);
    let space = FunctionSpace::new(mesh, 3)?;
    let u = space.interpolate(|[x, y]| (3.0 * x).sin() * y);
    let v = space.interpolate(|[x, y]| x * x - y);
    let vtk = dir.join("fields.vtk");
    write_vtk(&[("u", &u), ("v", &v)], &vtk)?;
    println!("wrote {}", vtk.display());

    let coeffs = dir.join("u_coefficients.csv");
    u.write_csv(&coeffs)?;
    let back = FEFunction::read_csv(space.clone(), &coeffs)?;
    println!("coefficient CSV round trip exact: {}", back.coeffs == u.coeffs);

    let mut config = RunConfig::new(Experiment::Mms);
    config.out = Some(dir.clone());
    let study = run_mms_degree(1, &[4, 8], &config)?;
    if let Some(path) = &study.csv_path {
        println!("convergence table {} has {} rows", path.display(), read_csv(path)?.len());
    }
    Ok(())
}
