//! Implicit time stepping for `(u_t, v) + a(u, v) = F(t; v)`.

use std::sync::Arc;

use crate::assembly::{apply_dirichlet, AssembledSystem, Assembler, ScalarField, TensorField, VectorField};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Point};
use crate::space::{BoundsBox, FEFunction};
use crate::sparse::{CsrMatrix, LuFactorization};
use crate::vi::{solve_box_vi, BoxViProblem, ViOptions, ViReport};

/// `steps` uniform steps of size `tau` covering `[0, t_final]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub tau: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Rounds `t_final / tau` to the nearest step count (at least one) and
    /// shrinks or stretches `tau` so the steps end exactly at `t_final`.
    pub fn new(t_final: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !(t_final > 0.0) {
            return Err(Error::InvalidArgument(format!("time grid needs T > 0 and tau > 0, got {t_final}, {tau}")));
        }
        let steps = ((t_final / tau).round() as usize).max(1);
        Ok(TimeGrid {
            t_final,
            tau: t_final / steps as f64,
            steps,
        })
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_final
        } else {
            i as f64 * self.tau
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    ImplicitMidpoint,
}

impl Scheme {
    /// Weight of `A` on the new and old levels.
    fn weights(self) -> (f64, f64) {
        match self {
            Scheme::BackwardEuler => (1.0, 0.0),
            Scheme::ImplicitMidpoint => (0.5, 0.5),
        }
    }

    /// Time at which the forcing is sampled for step `i` (from `t_{i-1}`).
    fn forcing_time(self, grid: &TimeGrid, i: usize) -> f64 {
        match self {
            Scheme::BackwardEuler => grid.time(i),
            Scheme::ImplicitMidpoint => grid.time(i - 1) + 0.5 * grid.tau,
        }
    }
}

/// One step's linear algebra, factored once when no bounds are imposed.
pub struct StepOperator {
    lhs: CsrMatrix,
    explicit: Option<CsrMatrix>,
    mass: CsrMatrix,
    tau: f64,
    dirichlet_dofs: Vec<usize>,
    dirichlet_values: Vec<f64>,
    lu: Option<LuFactorization>,
}

impl StepOperator {
    /// `(M + w tau A) u_new = (M - (1 - w) tau A) u_old + tau F`.
    pub fn new(mass: &CsrMatrix, a: &CsrMatrix, tau: f64, scheme: Scheme) -> Result<Self> {
        if mass.shape() != a.shape() {
            return Err(Error::DimensionMismatch("mass and operator shapes differ".into()));
        }
        let (w_new, w_old) = scheme.weights();
        let lhs = mass.add_scaled(1.0, a, w_new * tau)?;
        let explicit = if w_old > 0.0 {
            Some(mass.add_scaled(1.0, a, -w_old * tau)?)
        } else {
            None
        };
        Ok(StepOperator {
            lhs,
            explicit,
            mass: mass.clone(),
            tau,
            dirichlet_dofs: Vec::new(),
            dirichlet_values: Vec::new(),
            lu: None,
        })
    }

    pub fn with_dirichlet(mut self, dofs: Vec<usize>, values: Vec<f64>) -> Self {
        self.dirichlet_dofs = dofs;
        self.dirichlet_values = values;
        self.lu = None;
        self
    }

    fn rhs(&self, u_prev: &[f64], forcing: Option<&[f64]>) -> Vec<f64> {
        let mut rhs = match &self.explicit {
            Some(e) => e.matvec(u_prev),
            None => self.mass.matvec(u_prev),
        };
        if let Some(f) = forcing {
            for (r, fi) in rhs.iter_mut().zip(f) {
                *r += self.tau * fi;
            }
        }
        rhs
    }

    fn system(&self, rhs: Vec<f64>) -> AssembledSystem {
        let mut s = AssembledSystem::new(self.lhs.clone(), rhs);
        s.dirichlet_dofs = self.dirichlet_dofs.clone();
        s.dirichlet_values = self.dirichlet_values.clone();
        s
    }

    /// Advance one step. With `bounds`, the new coefficients solve the box
    /// VI; a non-converged VI is reported as [`Error::NotConverged`].
    pub fn step(
        &mut self,
        u_prev: &[f64],
        forcing: Option<&[f64]>,
        bounds: Option<&BoundsBox>,
        options: &ViOptions,
    ) -> Result<(Vec<f64>, Option<ViReport>)> {
        if u_prev.len() != self.lhs.nrows() {
            return Err(Error::DimensionMismatch("previous state has the wrong length".into()));
        }
        let rhs = self.rhs(u_prev, forcing);
        match bounds {
            None => {
                let fixed = apply_dirichlet(&self.system(rhs), &self.dirichlet_dofs, &self.dirichlet_values)?;
                if self.lu.is_none() {
                    self.lu = Some(LuFactorization::new(&fixed.matrix)?);
                }
                let lu = self.lu.as_ref().expect("factored above");
                Ok((lu.solve(&fixed.rhs)?, None))
            }
            Some(b) => {
                let b = b.clone().with_fixed(&self.dirichlet_dofs, &self.dirichlet_values);
                let problem = BoxViProblem::new(self.lhs.clone(), rhs, b, u_prev.to_vec())?;
                let report = solve_box_vi(&problem, options)?;
                if !report.converged {
                    return Err(Error::NotConverged {
                        iterations: report.iterations,
                        residual: report.final_residual,
                    });
                }
                Ok((report.solution.clone(), Some(report)))
            }
        }
    }
}

fn single_step(
    m: &CsrMatrix,
    a: &CsrMatrix,
    u_prev: &FEFunction,
    f: Option<&[f64]>,
    tau: f64,
    bounds: Option<&BoundsBox>,
    scheme: Scheme,
) -> Result<FEFunction> {
    let mut op = StepOperator::new(m, a, tau, scheme)?;
    let (x, _) = op.step(&u_prev.coeffs, f, bounds, &ViOptions::default())?;
    FEFunction::new(u_prev.space().clone(), x)
}

/// Solves `(M + tau A) u = M u_prev + tau F`, as a box VI when `bounds` is
/// given.
pub fn backward_euler_step(
    m: &CsrMatrix,
    a: &CsrMatrix,
    u_prev: &FEFunction,
    f: Option<&[f64]>,
    tau: f64,
    bounds: Option<&BoundsBox>,
) -> Result<FEFunction> {
    single_step(m, a, u_prev, f, tau, bounds, Scheme::BackwardEuler)
}

/// Solves `(M + tau/2 A) u = (M - tau/2 A) u_prev + tau F_mid`, as a box VI
/// when `bounds` is given.
pub fn implicit_midpoint_step(
    m: &CsrMatrix,
    a: &CsrMatrix,
    u_prev: &FEFunction,
    f_mid: Option<&[f64]>,
    tau: f64,
    bounds: Option<&BoundsBox>,
) -> Result<FEFunction> {
    single_step(m, a, u_prev, f_mid, tau, bounds, Scheme::ImplicitMidpoint)
}

/// Source term `f(t, x)`.
pub type TimeForcing = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;

/// Everything `run_transient` needs besides the initial state.
#[derive(Clone)]
pub struct TransientSetup {
    pub kappa: TensorField,
    pub beta: VectorField,
    pub forcing: Option<TimeForcing>,
    /// Constant Dirichlet values per boundary tag.
    pub dirichlet: Vec<(BoundaryTag, f64)>,
    pub bounds: Option<BoundsBox>,
    pub grid: TimeGrid,
    pub scheme: Scheme,
    /// Keep every `snapshot_every`-th state (and always the first and last);
    /// zero keeps only those two.
    pub snapshot_every: usize,
    pub vi_options: ViOptions,
    pub parallel_assembly: bool,
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub time: f64,
    pub min_coeff: f64,
    pub max_coeff: f64,
    /// Zero for unconstrained steps.
    pub vi_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<(usize, f64, FEFunction)>,
    pub stats: Vec<StepStats>,
    pub final_state: FEFunction,
}

/// March `u0` over `setup.grid`. A failing step aborts with
/// [`Error::StepFailed`] naming its index (1-based).
pub fn run_transient(u0: &FEFunction, setup: &TransientSetup) -> Result<Trajectory> {
    let space = u0.space().clone();
    let asm = Assembler::new(&space).parallel(setup.parallel_assembly);
    let m = asm.mass()?;
    let a = asm
        .diffusion(&setup.kappa)?
        .add_scaled(1.0, &asm.convection(&setup.beta)?, 1.0)?;
    let (dofs, values) = crate::assembly::dirichlet_data(&space, &setup.dirichlet);
    let mut op = StepOperator::new(&m, &a, setup.grid.tau, setup.scheme)?.with_dirichlet(dofs, values);

    let mut u = u0.coeffs.clone();
    let mut snapshots = vec![(0, 0.0, u0.clone())];
    let mut stats = Vec::with_capacity(setup.grid.steps);
    for i in 1..=setup.grid.steps {
        let load = match &setup.forcing {
            Some(f) => {
                let t = setup.scheme.forcing_time(&setup.grid, i);
                let f = f.clone();
                Some(asm.load(&ScalarField::new(move |p| f(t, p)), None)?)
            }
            None => None,
        };
        let (next, report) = op
            .step(&u, load.as_deref(), setup.bounds.as_ref(), &setup.vi_options)
            .map_err(|e| Error::StepFailed {
                step: i,
                source: Box::new(e),
            })?;
        u = next;
        let t = setup.grid.time(i);
        stats.push(StepStats {
            step: i,
            time: t,
            min_coeff: u.iter().copied().fold(f64::INFINITY, f64::min),
            max_coeff: u.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            vi_iterations: report.map_or(0, |r| r.iterations),
        });
        let keep = i == setup.grid.steps || (setup.snapshot_every > 0 && i % setup.snapshot_every == 0);
        if keep {
            snapshots.push((i, t, FEFunction::new(space.clone(), u.clone())?));
        }
    }
    Ok(Trajectory {
        snapshots,
        stats,
        final_state: FEFunction::new(space, u)?,
    })
}
