//! Command-line front end for the numerical studies.
//!
//! Exit codes: 0 on success, 2 when a solver fails to converge, 1 on any
//! other error (bad arguments, failed checks, I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use bernstein_vi::experiments::{
    observed_order, run_approx_check, run_mms_study, run_rotating_cone, run_rough_forcing, run_supg_benchmark,
    Experiment, RunConfig, SolverKind, FEASIBILITY_TOL, MMS_MESHES,
};
use bernstein_vi::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bvi", about = "Bounds-constrained Bernstein finite element studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Polynomial degree (1, 2 or 3); default depends on the study.
    #[arg(long, global = true)]
    degree: Option<usize>,

    /// Mesh parameter; default depends on the study.
    #[arg(long, global = true)]
    n: Option<usize>,

    /// `vp` solves the plain linear system only; `vi` also solves the
    /// bounds-constrained problem.
    #[arg(long, global = true, value_enum, default_value_t = Solver::Vi)]
    solver: Solver,

    /// Absolute tolerance of the VI solver.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,

    /// Directory for CSV and VTK output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Write every K-th time step of transient runs.
    #[arg(long, global = true, default_value_t = 0)]
    snapshots: usize,

    /// Assemble cell contributions on all cores.
    #[arg(long, global = true)]
    parallel_assembly: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Convergence study against a manufactured solution.
    Mms,
    /// Diffusion with a discontinuous source.
    Rough,
    /// SUPG transport around a hole (`--n 72` for the refined mesh).
    Supg,
    /// One rotation of a cone.
    Cone,
    /// Randomized restricted-range approximation checks.
    ApproxCheck,
}

#[derive(ValueEnum, Clone, Copy)]
enum Solver {
    Vp,
    Vi,
}

enum Failure {
    NotConverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let converged_issue = match &e {
            Error::NotConverged { .. } => true,
            Error::StepFailed { source, .. } => matches!(**source, Error::NotConverged { .. }),
            _ => false,
        };
        if converged_issue {
            Failure::NotConverged(e.to_string())
        } else {
            Failure::Other(e.to_string())
        }
    }
}

fn check_feasible(label: &str, violation: f64) -> Result<(), Failure> {
    if violation > FEASIBILITY_TOL {
        return Err(Failure::Other(format!("{label}: solution leaves its box by {violation:e}")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let experiment = match cli.command {
        Command::Mms => Experiment::Mms,
        Command::Rough => Experiment::Rough,
        Command::Supg => Experiment::Supg,
        Command::Cone => Experiment::Cone,
        Command::ApproxCheck => Experiment::ApproxCheck,
    };
    let config = RunConfig {
        experiment,
        degree: cli.degree,
        n: cli.n,
        solver: match cli.solver {
            Solver::Vp => SolverKind::Vp,
            Solver::Vi => SolverKind::Vi,
        },
        tol: cli.tol,
        out: cli.out.clone(),
        snapshots: cli.snapshots,
        parallel_assembly: cli.parallel_assembly,
    };
    config.validate()?;

    match experiment {
        Experiment::Mms => {
            let degrees = config.degree.map_or(vec![1, 2, 3], |k| vec![k]);
            let ns = config.n.map_or(MMS_MESHES.to_vec(), |n| vec![n]);
            let studies = run_mms_study(&degrees, &ns, &config)?;
            let mut all_converged = true;
            for s in &studies {
                println!("degree {}", s.degree);
                println!("{:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}", "N", "ul2", "cl2", "uh1", "ch1", "uen", "cen");
                for r in &s.rows {
                    println!(
                        "{:>4} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                        r.n, r.ul2, r.cl2, r.uh1, r.ch1, r.uen, r.cen
                    );
                }
                for w in s.rows.windows(2) {
                    println!(
                        "  order {}->{}: L2 vp {:.2} vi {:.2}, H1 vp {:.2} vi {:.2}",
                        w[0].n,
                        w[1].n,
                        observed_order(w[0].ul2, w[1].ul2),
                        observed_order(w[0].cl2, w[1].cl2),
                        observed_order(w[0].uh1, w[1].uh1),
                        observed_order(w[0].ch1, w[1].ch1)
                    );
                }
                if let Some(p) = &s.csv_path {
                    println!("  wrote {}", p.display());
                }
                check_feasible("mms vi", s.vi_violation)?;
                all_converged &= s.vi_converged;
            }
            if !all_converged {
                return Err(Failure::NotConverged("some VI solves did not converge".into()));
            }
        }
        Experiment::Rough => {
            let s = run_rough_forcing(config.degree.unwrap_or(2), config.n.unwrap_or(16), &config)?;
            print!("{s}");
            check_feasible("rough vi", s.vi_violation)?;
            if s.vi_report.as_ref().is_some_and(|r| !r.converged) {
                return Err(Failure::NotConverged("rough-forcing VI did not converge".into()));
            }
        }
        Experiment::Supg => {
            let s = run_supg_benchmark(config.degree.unwrap_or(1), config.n.unwrap_or(36), &config)?;
            print!("{s}");
            check_feasible("supg vi", s.vi_violation)?;
            if !s.vi_converged() {
                return Err(Failure::NotConverged("SUPG VI did not converge".into()));
            }
        }
        Experiment::Cone => {
            let solvers = match config.solver {
                SolverKind::Vp => vec![SolverKind::Vp],
                SolverKind::Vi => vec![SolverKind::Vp, SolverKind::Vi],
            };
            let s = run_rotating_cone(config.degree.unwrap_or(1), config.n.unwrap_or(32), &solvers, &config)?;
            print!("{s}");
            if let Some(vi) = s.run(SolverKind::Vi) {
                if vi.first_exit.is_some() {
                    return Err(Failure::Other("cone vi: trajectory left [0, 1]".into()));
                }
            }
        }
        Experiment::ApproxCheck => {
            let s = run_approx_check(100, 20, 0)?;
            println!("{s}");
            if !s.passed() {
                return Err(Failure::Other("approximation checks failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
