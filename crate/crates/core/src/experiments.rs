//! Drivers for the numerical studies and their CSV / VTK outputs.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::{
    derivative_bound_check, despres_construction, error_norms, for_each_sample, inverse_constant_probe,
    sampled_range, sup_norm_estimate, NormKind, RangeInterval,
};
use crate::assembly::{dirichlet_data, AssembledSystem, Assembler, SupgDelta, TensorField};
use crate::bernstein::{coefficient_box_certificate, enumerate_multiindices, univariate_bernstein, MultiIndex};
use crate::benchmarks::{mms_diffusion, rotating_cone, rough_diffusion, supg_benchmark, ProblemDefinition};
use crate::error::{Error, Result};
use crate::mesh::{build_mesh, DomainKind, DomainSpec, Mesh, Point};
use crate::space::{build_space, BoundsBox, FEFunction, FunctionSpace};
use crate::time::{run_transient, Scheme, TimeGrid, TransientSetup};
use crate::vi::{constrained_l2_projection, solve_vi, solve_vp, ViOptions, ViReport};

/// Tolerance for re-checking solver output against its box.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverKind {
    /// Plain Galerkin linear system.
    Vp,
    /// Box-constrained variational inequality.
    Vi,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vp" => Ok(SolverKind::Vp),
            "vi" => Ok(SolverKind::Vi),
            _ => Err(Error::InvalidArgument(format!("unknown solver {s:?} (expected vp or vi)"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Vp => "vp",
            SolverKind::Vi => "vi",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Mms,
    Rough,
    Supg,
    Cone,
    ApproxCheck,
}

/// Settings shared by every study.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: Experiment,
    /// `None` runs every degree the study supports.
    pub degree: Option<usize>,
    /// `None` uses the study's default mesh sizes.
    pub n: Option<usize>,
    pub solver: SolverKind,
    pub tol: f64,
    pub out: Option<PathBuf>,
    /// Keep every K-th time step of transient runs (0: first and last only).
    pub snapshots: usize,
    pub parallel_assembly: bool,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            degree: None,
            n: None,
            solver: SolverKind::Vi,
            tol: 1e-8,
            out: None,
            snapshots: 0,
            parallel_assembly: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.degree {
            if !(1..=3).contains(&k) {
                return Err(Error::UnsupportedDegree(k));
            }
        }
        if self.n == Some(0) {
            return Err(Error::InvalidMesh("n must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn vi_options(&self) -> ViOptions {
        ViOptions::with_tol(self.tol)
    }

    fn out_file(&self, name: &str) -> Result<Option<PathBuf>> {
        match &self.out {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Ok(Some(dir.join(name)))
            }
            None => Ok(None),
        }
    }
}

/// A steady solve and, for the VI, its solver report.
#[derive(Clone, Debug)]
pub struct SteadySolution {
    pub u: FEFunction,
    pub report: Option<ViReport>,
}

/// Uniform bounds of `problem` as a box, with Dirichlet dofs fixed.
pub fn problem_bounds(problem: &ProblemDefinition, space: &FunctionSpace) -> BoundsBox {
    let n = space.ndofs();
    let bounds = match problem.bounds {
        Some((lb, ub)) => BoundsBox::uniform(n, lb, ub).expect("benchmark bounds are ordered"),
        None => BoundsBox::unbounded(n),
    };
    let (dofs, values) = dirichlet_data(space, &problem.dirichlet);
    bounds.with_fixed(&dofs, &values)
}

/// Assemble the steady problem: Galerkin diffusion, or SUPG when the problem
/// has a velocity. Dirichlet data is recorded but not yet applied.
pub fn assemble_steady(problem: &ProblemDefinition, space: &FunctionSpace, parallel: bool) -> Result<AssembledSystem> {
    let asm = Assembler::new(space).parallel(parallel);
    let mut system = match &problem.beta {
        Some(beta) => asm.supg(&problem.kappa, beta, &problem.f, SupgDelta::Standard)?,
        None => AssembledSystem::new(asm.diffusion(&problem.kappa)?, asm.load(&problem.f, None)?),
    };
    let (dofs, values) = dirichlet_data(space, &problem.dirichlet);
    system.dirichlet_dofs = dofs;
    system.dirichlet_values = values;
    Ok(system)
}

/// Solve `problem` on `space` as a VP or a VI.
pub fn solve_steady(
    problem: &ProblemDefinition,
    space: &Arc<FunctionSpace>,
    solver: SolverKind,
    options: &ViOptions,
    parallel: bool,
) -> Result<SteadySolution> {
    let system = assemble_steady(problem, space, parallel)?;
    match solver {
        SolverKind::Vp => Ok(SteadySolution {
            u: FEFunction::new(space.clone(), solve_vp(&system)?)?,
            report: None,
        }),
        SolverKind::Vi => {
            let bounds = problem_bounds(problem, space);
            let report = solve_vi(&system, &bounds, options)?;
            Ok(SteadySolution {
                u: FEFunction::new(space.clone(), report.solution.clone())?,
                report: Some(report),
            })
        }
    }
}

/// Largest violation of `bounds` by `u`'s coefficients.
pub fn bound_violation(u: &FEFunction, bounds: &BoundsBox) -> f64 {
    bounds.violation(&u.coeffs)
}

// ---------------------------------------------------------------------------
// Convergence tables

/// One mesh of a convergence study: VP (`u*`) and VI (`c*`) errors in L2,
/// the H1 seminorm and the energy norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub ul2: f64,
    pub cl2: f64,
    pub uh1: f64,
    pub ch1: f64,
    pub uen: f64,
    pub cen: f64,
}

pub const CONVERGENCE_HEADER: [&str; 7] = ["N", "ul2", "cl2", "uh1", "ch1", "uen", "cen"];

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes the header `N,ul2,cl2,uh1,ch1,uen,cen` and one line per row with
/// 17 significant digits.
pub fn write_csv(rows: &[ConvergenceRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(CONVERGENCE_HEADER)?;
    for r in rows {
        let mut rec = vec![r.n.to_string()];
        rec.extend([r.ul2, r.cl2, r.uh1, r.ch1, r.uen, r.cen].map(fmt_real));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ConvergenceRow>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != CONVERGENCE_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected header {header:?}")));
    }
    let bad = |s: &str| Error::InvalidArgument(format!("cannot parse {s:?}"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let real = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&rec[i]));
        rows.push(ConvergenceRow {
            n: rec[0].parse().map_err(|_| bad(&rec[0]))?,
            ul2: real(1)?,
            cl2: real(2)?,
            uh1: real(3)?,
            ch1: real(4)?,
            uen: real(5)?,
            cen: real(6)?,
        });
    }
    Ok(rows)
}

/// `log2(coarse / fine)`, the observed order between meshes `n` and `2n`.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

/// Convergence table of one degree.
#[derive(Clone, Debug)]
pub struct MmsStudy {
    pub degree: usize,
    pub rows: Vec<ConvergenceRow>,
    /// False when some VI solve hit the iteration cap (its entries are NaN).
    pub vi_converged: bool,
    /// Largest bound violation over all VI solutions.
    pub vi_violation: f64,
    pub csv_path: Option<PathBuf>,
}

pub const MMS_MESHES: [usize; 5] = [4, 8, 16, 32, 64];

/// VP and VI errors of the manufactured-solution problem for degree `k` on
/// every mesh in `ns`; writes `diffmms_deg{k}.csv` when `config.out` is set.
pub fn run_mms_degree(k: usize, ns: &[usize], config: &RunConfig) -> Result<MmsStudy> {
    let base = mms_diffusion();
    let exact = base.exact.clone().expect("manufactured solution");
    let mut rows = Vec::new();
    let mut vi_converged = true;
    let mut vi_violation = 0.0f64;
    for &n in ns {
        let problem = base.clone().on_mesh(n);
        let space = build_space(Arc::new(build_mesh(problem.domain)?), k)?;
        let norms = |u: &FEFunction| error_norms(u, &*exact.value, &*exact.gradient, &problem.kappa);
        let vp = solve_steady(&problem, &space, SolverKind::Vp, &config.vi_options(), config.parallel_assembly)?;
        let vi = solve_steady(&problem, &space, SolverKind::Vi, &config.vi_options(), config.parallel_assembly)?;
        let e_vp = norms(&vp.u)?;
        let report = vi.report.as_ref().expect("VI report");
        let (cl2, ch1, cen) = if report.converged {
            vi_violation = vi_violation.max(bound_violation(&vi.u, &problem_bounds(&problem, &space)));
            let e = norms(&vi.u)?;
            (e.l2, e.h1_semi, e.energy)
        } else {
            vi_converged = false;
            (f64::NAN, f64::NAN, f64::NAN)
        };
        rows.push(ConvergenceRow {
            n,
            ul2: e_vp.l2,
            cl2,
            uh1: e_vp.h1_semi,
            ch1,
            uen: e_vp.energy,
            cen,
        });
    }
    let csv_path = config.out_file(&format!("diffmms_deg{k}.csv"))?;
    if let Some(p) = &csv_path {
        write_csv(&rows, p)?;
    }
    Ok(MmsStudy {
        degree: k,
        rows,
        vi_converged,
        vi_violation,
        csv_path,
    })
}

pub fn run_mms_study(degrees: &[usize], ns: &[usize], config: &RunConfig) -> Result<Vec<MmsStudy>> {
    degrees.iter().map(|&k| run_mms_degree(k, ns, config)).collect()
}

// ---------------------------------------------------------------------------
// Rough forcing

#[derive(Clone, Debug)]
pub struct RoughSummary {
    pub degree: usize,
    pub n: usize,
    pub vp: FEFunction,
    pub vi: Option<FEFunction>,
    /// `vp - vi`.
    pub difference: Option<FEFunction>,
    pub vi_report: Option<ViReport>,
    pub vi_violation: f64,
    pub vtk_path: Option<PathBuf>,
}

impl fmt::Display for RoughSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rough forcing, k = {}, n = {}", self.degree, self.n)?;
        writeln!(f, "  vp coefficients in [{:.6e}, {:.6e}]", self.vp.min_coeff(), self.vp.max_coeff())?;
        if let (Some(vi), Some(d)) = (&self.vi, &self.difference) {
            writeln!(f, "  vi coefficients in [{:.6e}, {:.6e}]", vi.min_coeff(), vi.max_coeff())?;
            writeln!(f, "  vp - vi coefficients in [{:.6e}, {:.6e}]", d.min_coeff(), d.max_coeff())?;
        }
        if let Some(r) = &self.vi_report {
            writeln!(f, "  vi: {} iterations, residual {:.3e}, converged {}", r.iterations, r.final_residual, r.converged)?;
        }
        Ok(())
    }
}

/// VP and (for `SolverKind::Vi`) VI solutions of the rough-source problem,
/// with their difference; writes `rough_k{k}_n{n}.vtk`.
pub fn run_rough_forcing(k: usize, n: usize, config: &RunConfig) -> Result<RoughSummary> {
    let problem = rough_diffusion().on_mesh(n);
    let space = build_space(Arc::new(build_mesh(problem.domain)?), k)?;
    let opts = config.vi_options();
    let vp = solve_steady(&problem, &space, SolverKind::Vp, &opts, config.parallel_assembly)?.u;
    let (vi, report) = if config.solver == SolverKind::Vi {
        let s = solve_steady(&problem, &space, SolverKind::Vi, &opts, config.parallel_assembly)?;
        (Some(s.u), s.report)
    } else {
        (None, None)
    };
    let difference = vi.as_ref().map(|vi| vp.difference(vi)).transpose()?;
    let vi_violation = vi
        .as_ref()
        .map_or(0.0, |u| bound_violation(u, &problem_bounds(&problem, &space)));
    let vtk_path = config.out_file(&format!("rough_k{k}_n{n}.vtk"))?;
    if let Some(p) = &vtk_path {
        let mut fields = vec![("vp", &vp)];
        if let (Some(vi), Some(d)) = (&vi, &difference) {
            fields.push(("vi", vi));
            fields.push(("difference", d));
        }
        write_vtk(&fields, p)?;
    }
    Ok(RoughSummary {
        degree: k,
        n,
        vp,
        vi,
        difference,
        vi_report: report,
        vi_violation,
        vtk_path,
    })
}

// ---------------------------------------------------------------------------
// SUPG benchmark

#[derive(Clone, Debug)]
pub struct SupgSummary {
    pub degree: usize,
    pub n: usize,
    pub cells: usize,
    pub dofs: usize,
    pub vp: FEFunction,
    pub vi: Option<FEFunction>,
    pub vi_report: Option<ViReport>,
    /// Largest violation of the box by a converged VI solution.
    pub vi_violation: f64,
    /// Largest deviation of a Dirichlet dof from its prescribed value, over
    /// all computed solutions.
    pub dirichlet_error: f64,
}

impl SupgSummary {
    pub fn vi_converged(&self) -> bool {
        self.vi_report.as_ref().is_none_or(|r| r.converged)
    }
}

impl fmt::Display for SupgSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "supg benchmark, k = {}, n = {} ({} cells, {} dofs)", self.degree, self.n, self.cells, self.dofs)?;
        writeln!(f, "# reference unstructured meshes have 5440 (coarse) and 21760 (refined) cells")?;
        writeln!(f, "  vp coefficients in [{:.9e}, {:.9e}]", self.vp.min_coeff(), self.vp.max_coeff())?;
        if let Some(vi) = &self.vi {
            writeln!(f, "  vi coefficients in [{:.6e}, {:.6e}]", vi.min_coeff(), vi.max_coeff())?;
        }
        if let Some(r) = &self.vi_report {
            writeln!(f, "  vi: {} iterations, residual {:.3e}, converged {}", r.iterations, r.final_residual, r.converged)?;
        }
        writeln!(f, "  dirichlet error {:.3e}", self.dirichlet_error)
    }
}

/// Coarse (`refine = false`, n = 36) or once-refined (n = 72) structured
/// hole mesh.
pub fn supg_mesh_size(refine: bool) -> usize {
    if refine {
        72
    } else {
        36
    }
}

/// SUPG solutions of the transport benchmark. A VI that hits its iteration
/// cap is reported in the summary, not as an error.
pub fn run_supg_benchmark(k: usize, n: usize, config: &RunConfig) -> Result<SupgSummary> {
    let problem = supg_benchmark().on_mesh(n);
    let mesh = Arc::new(build_mesh(problem.domain)?);
    let space = build_space(mesh.clone(), k)?;
    let opts = config.vi_options();
    let vp = solve_steady(&problem, &space, SolverKind::Vp, &opts, config.parallel_assembly)?.u;
    let (dofs, values) = dirichlet_data(&space, &problem.dirichlet);
    let dirichlet_err = |u: &FEFunction| {
        dofs.iter()
            .zip(&values)
            .map(|(&d, v)| (u.coeffs[d] - v).abs())
            .fold(0.0, f64::max)
    };
    let mut dirichlet_error = dirichlet_err(&vp);
    let (mut vi, mut vi_report, mut vi_violation) = (None, None, 0.0);
    if config.solver == SolverKind::Vi {
        let s = solve_steady(&problem, &space, SolverKind::Vi, &opts, config.parallel_assembly)?;
        let report = s.report.expect("VI report");
        if report.converged {
            vi_violation = bound_violation(&s.u, &problem_bounds(&problem, &space));
        }
        if let Some(p) = config.out_file(&format!("supg_k{k}_n{n}_vi_log.csv"))? {
            report.write_log_csv(p)?;
        }
        dirichlet_error = dirichlet_error.max(dirichlet_err(&s.u));
        vi = Some(s.u);
        vi_report = Some(report);
    }
    if let Some(p) = config.out_file(&format!("supg_k{k}_n{n}.vtk"))? {
        let mut fields = vec![("vp", &vp)];
        if let Some(vi) = &vi {
            fields.push(("vi", vi));
        }
        write_vtk(&fields, p)?;
    }
    Ok(SupgSummary {
        degree: k,
        n,
        cells: mesh.num_cells(),
        dofs: space.ndofs(),
        vp,
        vi,
        vi_report,
        vi_violation,
        dirichlet_error,
    })
}

// ---------------------------------------------------------------------------
// Rotating cone

#[derive(Clone, Debug)]
pub struct ConeRun {
    pub solver: SolverKind,
    pub final_state: FEFunction,
    /// L2 distance of the final state to the initial profile.
    pub final_l2_error: f64,
    /// Extreme coefficients over all time steps.
    pub min_coeff: f64,
    pub max_coeff: f64,
    /// First step whose coefficients leave `[0, 1]` by more than `1e-8`.
    pub first_exit: Option<usize>,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct ConeSummary {
    pub degree: usize,
    pub n: usize,
    pub initial: FEFunction,
    pub initial_report: ViReport,
    pub runs: Vec<ConeRun>,
}

impl ConeSummary {
    pub fn run(&self, solver: SolverKind) -> Option<&ConeRun> {
        self.runs.iter().find(|r| r.solver == solver)
    }
}

impl fmt::Display for ConeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rotating cone, k = {}, n = {}", self.degree, self.n)?;
        writeln!(
            f,
            "  initial projection: coefficients in [{:.6e}, {:.6e}], {} VI iterations",
            self.initial.min_coeff(),
            self.initial.max_coeff(),
            self.initial_report.iterations
        )?;
        for r in &self.runs {
            writeln!(
                f,
                "  {}: {} steps, coefficients in [{:.6e}, {:.6e}], final L2 error {:.6e}, first exit {:?}",
                r.solver, r.steps, r.min_coeff, r.max_coeff, r.final_l2_error, r.first_exit
            )?;
        }
        Ok(())
    }
}

/// One rotation of the cone with implicit midpoint steps `tau = 1/n` on an
/// `n x n` mesh, from the bounds-constrained L2 projection of the cone.
pub fn run_rotating_cone(k: usize, n: usize, solvers: &[SolverKind], config: &RunConfig) -> Result<ConeSummary> {
    let problem = rotating_cone().on_mesh(n);
    let space = build_space(Arc::new(build_mesh(problem.domain)?), k)?;
    let opts = config.vi_options();
    let bounds = problem_bounds(&problem, &space);
    let initial_field = problem.initial.clone().expect("cone initial state");
    let (initial, initial_report) = constrained_l2_projection(&space, initial_field, &bounds, &opts)?;
    if !initial_report.converged {
        return Err(Error::NotConverged {
            iterations: initial_report.iterations,
            residual: initial_report.final_residual,
        });
    }
    let exact = problem.exact.clone().expect("cone profile");
    let grid = TimeGrid::new(problem.t_final.expect("final time"), 1.0 / n as f64)?;
    let (lb, ub) = problem.bounds.expect("cone bounds");
    let mut runs = Vec::new();
    for &solver in solvers {
        let setup = TransientSetup {
            kappa: problem.kappa.clone(),
            beta: problem.beta.clone().expect("cone velocity"),
            forcing: None,
            dirichlet: problem.dirichlet.clone(),
            bounds: (solver == SolverKind::Vi).then(|| BoundsBox::uniform(space.ndofs(), lb, ub).expect("ordered")),
            grid,
            scheme: Scheme::ImplicitMidpoint,
            snapshot_every: config.snapshots,
            vi_options: opts.clone(),
            parallel_assembly: config.parallel_assembly,
        };
        let traj = run_transient(&initial, &setup)?;
        let err = error_norms(&traj.final_state, &*exact.value, &*exact.gradient, &TensorField::isotropic(1.0))?;
        let min_coeff = traj.stats.iter().map(|s| s.min_coeff).fold(f64::INFINITY, f64::min);
        let max_coeff = traj.stats.iter().map(|s| s.max_coeff).fold(f64::NEG_INFINITY, f64::max);
        let first_exit = traj
            .stats
            .iter()
            .find(|s| s.min_coeff < lb - FEASIBILITY_TOL || s.max_coeff > ub + FEASIBILITY_TOL)
            .map(|s| s.step);
        if config.out.is_some() {
            for (step, _, u) in &traj.snapshots {
                if let Some(p) = config.out_file(&format!("cone_{solver}_k{k}_n{n}_step{step:05}.vtk"))? {
                    write_vtk(&[("u", u)], p)?;
                }
            }
        }
        runs.push(ConeRun {
            solver,
            final_state: traj.final_state,
            final_l2_error: err.l2,
            min_coeff,
            max_coeff,
            first_exit,
            steps: grid.steps,
        });
    }
    Ok(ConeSummary {
        degree: k,
        n,
        initial,
        initial_report,
        runs,
    })
}

// ---------------------------------------------------------------------------
// Restricted-range approximation checks

/// Outcome of the randomized approximation property suite.
#[derive(Clone, Debug, Default)]
pub struct ApproxCheckSummary {
    pub pairs: usize,
    /// Pairs whose sampled range of `q` lies in `[m - 1e-10, M + 1e-10]`.
    pub range_ok: usize,
    /// Pairs with sampled `||f - q||_inf <= 2 ||f - g||_inf + 1e-10`.
    pub doubling_ok: usize,
    /// Pairs satisfying `||f - q||_2 <= |Omega|^(1/2) ||f - q||_inf` and
    /// `||f - q||_inf <= 2 ||f - g||_inf` (sampled sup norms).
    pub l2_chain_ok: usize,
    /// Certificate verdict for `B_0 - 0.9 B_1 + B_2` on `[0, 1]`.
    pub quadratic_certificate: bool,
    pub quadratic_min: f64,
    pub quadratic_argmin: f64,
    /// `(degree, [(n, probed ratio)])`.
    pub inverse_probes: Vec<(usize, Vec<(usize, f64)>)>,
    pub derivative_checks: usize,
    pub derivative_ok: usize,
}

impl ApproxCheckSummary {
    /// Largest ratio between probes on consecutive meshes.
    pub fn worst_probe_growth(&self) -> f64 {
        self.inverse_probes
            .iter()
            .flat_map(|(_, v)| v.windows(2).map(|w| w[1].1 / w[0].1))
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.range_ok == self.pairs
            && self.doubling_ok == self.pairs
            && self.l2_chain_ok == self.pairs
            && !self.quadratic_certificate
            && (self.quadratic_min - 0.05).abs() <= 1e-12
            && self.worst_probe_growth() <= 1.05
            && self.derivative_ok == self.derivative_checks
    }
}

impl fmt::Display for ApproxCheckSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "restricted-range approximation checks")?;
        writeln!(f, "  range kept:        {}/{}", self.range_ok, self.pairs)?;
        writeln!(f, "  error at most 2x:  {}/{}", self.doubling_ok, self.pairs)?;
        writeln!(f, "  L2 chain:          {}/{}", self.l2_chain_ok, self.pairs)?;
        writeln!(
            f,
            "  quadratic 1,-0.9,1: certificate {}, sampled min {:.15} at x = {}",
            self.quadratic_certificate, self.quadratic_min, self.quadratic_argmin
        )?;
        for (k, probes) in &self.inverse_probes {
            let s: Vec<String> = probes.iter().map(|(n, r)| format!("n={n}: {r:.4}")).collect();
            writeln!(f, "  inverse probe k={k}: {}", s.join(", "))?;
        }
        writeln!(f, "  derivative bound:  {}/{}", self.derivative_ok, self.derivative_checks)?;
        write!(f, "  overall: {}", if self.passed() { "pass" } else { "FAIL" })
    }
}

/// Random polynomial of total degree at most 5 on the unit square, given by
/// its monomial coefficients.
#[derive(Clone, Debug)]
pub struct RandomPolynomial {
    terms: Vec<(i32, i32, f64)>,
}

impl RandomPolynomial {
    pub fn sample(rng: &mut ChaCha8Rng, max_degree: i32) -> Self {
        let degree = rng.gen_range(0..=max_degree);
        let mut terms = Vec::new();
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                terms.push((a, b, rng.gen_range(-1.0..1.0)));
            }
        }
        RandomPolynomial { terms }
    }

    pub fn eval(&self, [x, y]: Point) -> f64 {
        self.terms.iter().map(|&(a, b, c)| c * x.powi(a) * y.powi(b)).sum()
    }
}

/// Smooth random target `sum_i a_i sin(w_i . x + phi_i)` with its gradient.
#[derive(Clone, Debug)]
pub struct RandomWave {
    terms: Vec<(f64, [f64; 2], f64)>,
}

impl RandomWave {
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.2..1.0),
                    [rng.gen_range(-2.0 * PI..2.0 * PI), rng.gen_range(-2.0 * PI..2.0 * PI)],
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        RandomWave { terms }
    }

    pub fn eval(&self, [x, y]: Point) -> f64 {
        self.terms.iter().map(|(a, w, p)| a * (w[0] * x + w[1] * y + p).sin()).sum()
    }

    pub fn gradient(&self, [x, y]: Point) -> [f64; 2] {
        self.terms.iter().fold([0.0; 2], |acc, (a, w, p)| {
            let c = a * (w[0] * x + w[1] * y + p).cos();
            [acc[0] + c * w[0], acc[1] + c * w[1]]
        })
    }
}

fn unit_square(n: usize) -> Result<Arc<Mesh>> {
    Ok(Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, n))?))
}

fn perturbed_interpolant(space: &Arc<FunctionSpace>, f: impl Fn(Point) -> f64, amp: f64, rng: &mut ChaCha8Rng) -> FEFunction {
    let mut g = space.interpolate(f);
    for c in g.coeffs.iter_mut() {
        *c += amp * rng.gen_range(-1.0..1.0);
    }
    g
}

/// Randomized checks of the restricted-range construction, the inverse
/// estimate probe and the derivative bound.
pub fn run_approx_check(pairs: usize, derivative_targets: usize, seed: u64) -> Result<ApproxCheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ApproxCheckSummary {
        pairs,
        ..Default::default()
    };
    let meshes = [unit_square(2)?, unit_square(4)?];
    for i in 0..pairs {
        let k = 1 + i % 3;
        let space = build_space(meshes[i % 2].clone(), k)?;
        let f = RandomPolynomial::sample(&mut rng, 5);
        let fv = |p: Point| f.eval(p);
        let probe = space.interpolate(fv);
        let mut m = f64::INFINITY;
        let mut big_m = f64::NEG_INFINITY;
        // Range of f on exactly the lattice used by the sup-norm estimate.
        for_each_sample(&probe, crate::approx::default_sampling_order(k), |p, _| {
            let v = f.eval(p);
            m = m.min(v);
            big_m = big_m.max(v);
        });
        let amp = 0.3 * rng.gen_range(0.0..1.0) * (big_m - m).max(0.1);
        let g = perturbed_interpolant(&space, fv, amp, &mut rng);
        let err = sup_norm_estimate(fv, &g);
        let q = despres_construction(&g, RangeInterval::new(m, big_m)?, err)?;
        let (lo, hi) = sampled_range(&q);
        if lo >= m - 1e-10 && hi <= big_m + 1e-10 {
            out.range_ok += 1;
        }
        let err_q = sup_norm_estimate(fv, &q);
        if err_q <= 2.0 * err + 1e-10 {
            out.doubling_ok += 1;
        }
        let l2 = error_norms(&q, fv, |_| [0.0; 2], &TensorField::isotropic(1.0))?.l2;
        let area = space.mesh().total_area();
        if l2 <= area.sqrt() * err_q + 1e-10 && err_q <= 2.0 * err + 1e-10 {
            out.l2_chain_ok += 1;
        }
    }

    let coeffs = [1.0, -0.9, 1.0];
    out.quadratic_certificate = coefficient_box_certificate(&coeffs, 0.0, f64::INFINITY);
    out.quadratic_min = f64::INFINITY;
    for s in 0..=1000 {
        let x = s as f64 / 1000.0;
        let v: f64 = (0..3)
            .map(|i| coeffs[i] * univariate_bernstein(2, i, x).expect("degree 2"))
            .sum();
        if v < out.quadratic_min {
            out.quadratic_min = v;
            out.quadratic_argmin = x;
        }
    }

    for k in 1..=3 {
        let mut probes = Vec::new();
        for n in [4, 8, 16] {
            let space = build_space(unit_square(n)?, k)?;
            probes.push((n, inverse_constant_probe(&space, NormKind::L2, 20, seed ^ (n as u64))?));
        }
        out.inverse_probes.push((k, probes));
    }

    for _ in 0..derivative_targets {
        for k in 1..=3 {
            let space = build_space(unit_square(8)?, k)?;
            let c_inv = out.inverse_probes[k - 1].1[1].1;
            let f = RandomWave::sample(&mut rng);
            let g = perturbed_interpolant(&space, |p| f.eval(p), 0.05, &mut rng);
            let mut m = f64::INFINITY;
            let mut big_m = f64::NEG_INFINITY;
            for_each_sample(&g, crate::approx::default_sampling_order(k), |p, _| {
                let v = f.eval(p);
                m = m.min(v);
                big_m = big_m.max(v);
            });
            let r = derivative_bound_check(|p| f.eval(p), |p| f.gradient(p), &g, RangeInterval::new(m, big_m)?, c_inv)?;
            out.derivative_checks += 1;
            if r.holds {
                out.derivative_ok += 1;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// VTK output

/// Writes a legacy ASCII (version 3.0) unstructured grid with one point
/// scalar per field.
///
/// Cells are split into `k^2` triangles along the degree-`k` lattice, `k`
/// being the largest field degree, and fields are sampled at the lattice
/// points. All fields must live on the same mesh.
pub fn write_vtk(fields: &[(&str, &FEFunction)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (_, first) = fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("no fields to write".into()))?;
    let mesh = first.space().mesh().clone();
    if fields.iter().any(|(_, u)| !Arc::ptr_eq(u.space().mesh(), &mesh)) {
        return Err(Error::InvalidArgument("fields live on different meshes".into()));
    }
    let degree = fields.iter().map(|(_, u)| u.space().degree()).max().expect("nonempty");
    let vis = FunctionSpace::new(mesh.clone(), degree)?;
    let points = vis.dof_points();
    let position: std::collections::HashMap<MultiIndex, usize> =
        vis.local_indices().iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let local = |i: usize, j: usize| position[&MultiIndex([degree - i - j, i, j])];
    let mut sub = Vec::new();
    for i in 0..degree {
        for j in 0..degree - i {
            sub.push([local(i, j), local(i + 1, j), local(i, j + 1)]);
            if i + j + 2 <= degree {
                sub.push([local(i + 1, j), local(i + 1, j + 1), local(i, j + 1)]);
            }
        }
    }
    let mut triangles = Vec::with_capacity(mesh.num_cells() * sub.len());
    // Sample each field once per visualization point.
    let mut values = vec![vec![f64::NAN; points.len()]; fields.len()];
    let lattice = enumerate_multiindices(degree);
    for c in 0..mesh.num_cells() {
        let dofs = vis.cell_dofs(c);
        for t in &sub {
            triangles.push(t.map(|l| dofs[l]));
        }
        for alpha in &lattice {
            let d = dofs[position[alpha]];
            if values[0][d].is_nan() {
                for (fi, (_, u)) in fields.iter().enumerate() {
                    values[fi][d] = u.evaluate_in_cell(c, alpha.lattice_point());
                }
            }
        }
    }

    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "bernstein-vi output")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(w, "POINTS {} double", points.len())?;
        for p in &points {
            writeln!(w, "{:.17e} {:.17e} 0", p[0], p[1])?;
        }
        writeln!(w, "CELLS {} {}", triangles.len(), 4 * triangles.len())?;
        for t in &triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "CELL_TYPES {}", triangles.len())?;
        for _ in &triangles {
            writeln!(w, "5")?;
        }
        writeln!(w, "POINT_DATA {}", points.len())?;
        for ((name, _), vals) in fields.iter().zip(&values) {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in vals {
                writeln!(w, "{v:.17e}")?;
            }
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&[], &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "N,ul2,cl2,uh1,ch1,uen,cen\n");
        let row = ConvergenceRow {
            n: 8,
            ul2: 0.1 + 0.2,
            cl2: 1.0 / 3.0,
            uh1: std::f64::consts::PI,
            ch1: 1e-300,
            uen: f64::NAN,
            cen: 7.0,
        };
        write_csv(&[row], &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back.len(), 1);
        let b = back[0];
        assert_eq!((b.n, b.ul2, b.cl2, b.uh1, b.ch1, b.cen), (8, row.ul2, row.cl2, row.uh1, row.ch1, 7.0));
        assert!(b.uen.is_nan());
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(Experiment::Mms);
        assert!(c.validate().is_ok());
        c.degree = Some(4);
        assert!(matches!(c.validate(), Err(Error::UnsupportedDegree(4))));
        c.degree = Some(2);
        c.tol = 0.0;
        assert!(c.validate().is_err());
        assert_eq!("vi".parse::<SolverKind>().unwrap(), SolverKind::Vi);
        assert!("cg".parse::<SolverKind>().is_err());
    }

    #[test]
    fn small_mms_rows_are_finite() {
        let cfg = RunConfig::new(Experiment::Mms);
        let s = run_mms_degree(1, &[4], &cfg).unwrap();
        let r = s.rows[0];
        for v in [r.ul2, r.cl2, r.uh1, r.ch1, r.uen, r.cen] {
            assert!(v.is_finite() && v > 0.0);
        }
        assert!(s.vi_converged);
    }
}
