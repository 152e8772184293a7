//! Box-constrained linear variational inequalities.
//!
//! For a box `lb <= x <= ub` the inequality `(Ax - b) . (y - x) >= 0` for all
//! feasible `y` is equivalent to the complementarity conditions
//! `r_i = 0` on free dofs, `r_i >= 0` at `lb_i` and `r_i <= 0` at `ub_i`,
//! with `r = Ax - b`. [`solve_box_vi`] finds such an `x` by a reduced-space
//! active-set Newton iteration.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use crate::assembly::{apply_dirichlet, AssembledSystem, Assembler, ScalarField};
use crate::error::{Error, Result};
use crate::quadrature::MAX_EXACTNESS;
use crate::space::{BoundsBox, FEFunction, FunctionSpace};
use crate::sparse::{dot, extract_submatrix, norm2, norm_inf, solve_linear, CsrMatrix, LuFactorization};

/// `A x = b` subject to `bounds`, started from `x0`.
#[derive(Clone, Debug)]
pub struct BoxViProblem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub bounds: BoundsBox,
    pub x0: Vec<f64>,
}

impl BoxViProblem {
    pub fn new(a: CsrMatrix, b: Vec<f64>, bounds: BoundsBox, x0: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || bounds.len() != n || x0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{}, rhs {}, bounds {}, x0 {}",
                a.nrows(),
                a.ncols(),
                b.len(),
                bounds.len(),
                x0.len()
            )));
        }
        Ok(BoxViProblem { a, b, bounds, x0 })
    }

    /// Start from the lower bound where finite, zero otherwise (then clamped).
    pub fn with_default_start(a: CsrMatrix, b: Vec<f64>, bounds: BoundsBox) -> Result<Self> {
        let x0 = vec![0.0; b.len()];
        BoxViProblem::new(a, b, bounds, x0)
    }

    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.a.matvec(x);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
        r
    }
}

#[derive(Clone, Debug)]
pub struct ViOptions {
    /// Absolute tolerance on the infinity norm of the projected residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Distance to a bound below which a dof counts as sitting on it.
    pub active_tol: f64,
    pub max_halvings: usize,
}

impl Default for ViOptions {
    fn default() -> Self {
        ViOptions {
            tol: 1e-8,
            max_iter: 200,
            active_tol: 1e-12,
            max_halvings: 30,
        }
    }
}

impl ViOptions {
    pub fn with_tol(tol: f64) -> Self {
        ViOptions { tol, ..Default::default() }
    }
}

/// One line of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViIteration {
    pub iteration: usize,
    pub active_lower: usize,
    pub active_upper: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ViReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the projected residual at `solution`.
    pub final_residual: f64,
    /// Dofs held at their lower bound, including every dof with `lb = ub`.
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub converged: bool,
    pub history: Vec<ViIteration>,
}

impl ViReport {
    /// Writes `iteration,active_lower,active_upper,residual`.
    pub fn write_log_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_log(file).map_err(|e| Error::io(path, e))
    }

    pub fn write_log(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,active_lower,active_upper,residual")?;
        for h in &self.history {
            writeln!(w, "{},{},{},{:.17e}", h.iteration, h.active_lower, h.active_upper, h.residual)?;
        }
        Ok(())
    }
}

/// `pi_i = min(x_i - lb_i, max(x_i - ub_i, r_i))` with `r = Ax - b`.
pub fn projected_residual(a: &CsrMatrix, b: &[f64], bounds: &BoundsBox, x: &[f64]) -> Vec<f64> {
    let r = a.matvec(x);
    project(&r, b, bounds, x)
}

fn project(ax: &[f64], b: &[f64], bounds: &BoundsBox, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let r = ax[i] - b[i];
            (x[i] - bounds.lb[i]).min((x[i] - bounds.ub[i]).max(r))
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Activity {
    Free,
    Lower,
    Upper,
}

fn classify(x: &[f64], r: &[f64], bounds: &BoundsBox, eps: f64) -> Vec<Activity> {
    (0..x.len())
        .map(|i| {
            let (lb, ub) = (bounds.lb[i], bounds.ub[i]);
            if lb == ub || (x[i] <= lb + eps && r[i] > 0.0) {
                Activity::Lower
            } else if x[i] >= ub - eps && r[i] < 0.0 {
                Activity::Upper
            } else {
                Activity::Free
            }
        })
        .collect()
}

fn clamp_into(bounds: &BoundsBox, x: &mut [f64]) {
    bounds.clamp(x);
}

/// Reduced-space active-set solve of the box VI.
///
/// Each iteration reclassifies the active sets from scratch, pins active
/// dofs to their bounds, solves `A_II d = -r_I` on the remaining dofs and
/// projects `x + t d` back into the box. For symmetric `A` the step length
/// `t` is halved until the quadratic energy does not increase; otherwise it
/// is halved until the 2-norm of the projected residual decreases, and the full step is
/// taken when no halving helps. Running out of iterations is reported with
/// `converged = false`; a singular reduced matrix is an error.
pub fn solve_box_vi(problem: &BoxViProblem, options: &ViOptions) -> Result<ViReport> {
    let BoxViProblem { a, b, bounds, x0 } = problem;
    let n = b.len();
    let mut x = x0.clone();
    clamp_into(bounds, &mut x);
    let symmetric = a.asymmetry() <= 1e-12 * a.max_abs().max(1.0);

    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let ax = a.matvec(&x);
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        let pi = project(&ax, b, bounds, &x);
        let res = norm_inf(&pi);
        let act = classify(&x, &r, bounds, options.active_tol);
        history.push(ViIteration {
            iteration: iterations,
            active_lower: act.iter().filter(|&&s| s == Activity::Lower).count(),
            active_upper: act.iter().filter(|&&s| s == Activity::Upper).count(),
            residual: res,
        });
        if res <= options.tol || iterations >= options.max_iter {
            let pick = |s| (0..n).filter(|&i| act[i] == s).collect::<Vec<_>>();
            return Ok(ViReport {
                solution: x,
                iterations,
                final_residual: res,
                active_lower: pick(Activity::Lower),
                active_upper: pick(Activity::Upper),
                converged: res <= options.tol,
                history,
            });
        }
        iterations += 1;

        for i in 0..n {
            match act[i] {
                Activity::Lower => x[i] = bounds.lb[i],
                Activity::Upper => x[i] = bounds.ub[i],
                Activity::Free => {}
            }
        }
        let free: Vec<usize> = (0..n).filter(|&i| act[i] == Activity::Free).collect();
        if free.is_empty() {
            continue;
        }
        let ax = a.matvec(&x);
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        let reduced = extract_submatrix(a, &free, &free);
        let rhs: Vec<f64> = free.iter().map(|&i| -r[i]).collect();
        // A Newton direction only; the projected residual decides convergence.
        let (d_free, _) = LuFactorization::new(&reduced)?.solve_refined(&rhs)?;
        let mut d = vec![0.0; n];
        for (&i, v) in free.iter().zip(&d_free) {
            d[i] = *v;
        }

        let trial = |t: f64| {
            let mut y: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            clamp_into(bounds, &mut y);
            y
        };
        let full = trial(1.0);
        let mut accepted = None;
        if symmetric {
            let mut t = 1.0;
            for _ in 0..=options.max_halvings {
                let y = if t == 1.0 { full.clone() } else { trial(t) };
                let s: Vec<f64> = y.iter().zip(&x).map(|(p, q)| p - q).collect();
                let as_ = a.matvec(&s);
                let de: f64 = (0..n).map(|i| s[i] * (r[i] + 0.5 * as_[i])).sum();
                if de <= 0.0 {
                    accepted = Some(y);
                    break;
                }
                t *= 0.5;
            }
        } else {
            let base = norm2(&project(&ax, b, bounds, &x));
            let mut t = 1.0;
            for _ in 0..=options.max_halvings {
                let y = if t == 1.0 { full.clone() } else { trial(t) };
                if norm2(&projected_residual(a, b, bounds, &y)) < base {
                    accepted = Some(y);
                    break;
                }
                t *= 0.5;
            }
        }
        x = accepted.unwrap_or(full);
    }
}

/// Solve the unconstrained system, imposing the system's Dirichlet data.
pub fn solve_vp(system: &AssembledSystem) -> Result<Vec<f64>> {
    let fixed = apply_dirichlet(system, &system.dirichlet_dofs, &system.dirichlet_values)?;
    solve_linear(&fixed.matrix, &fixed.rhs)
}

/// Box VI for an assembled system: Dirichlet dofs become `lb = ub = g`.
pub fn solve_vi(system: &AssembledSystem, bounds: &BoundsBox, options: &ViOptions) -> Result<ViReport> {
    let bounds = bounds
        .clone()
        .with_fixed(&system.dirichlet_dofs, &system.dirichlet_values);
    let problem = BoxViProblem::with_default_start(system.matrix.clone(), system.rhs.clone(), bounds)?;
    solve_box_vi(&problem, options)
}

/// The closest function in the L2 sense whose coefficients lie in `bounds`,
/// found as the box VI of the mass matrix.
pub fn constrained_l2_projection(
    space: &Arc<FunctionSpace>,
    field: ScalarField,
    bounds: &BoundsBox,
    options: &ViOptions,
) -> Result<(FEFunction, ViReport)> {
    let asm = Assembler::new(space).with_exactness((2 * space.degree() + 4).min(MAX_EXACTNESS));
    let m = asm.mass()?;
    let rhs = asm.load(&field, None)?;
    let problem = BoxViProblem::with_default_start(m, rhs, bounds.clone())?;
    let report = solve_box_vi(&problem, options)?;
    let u = FEFunction::new(space.clone(), report.solution.clone())?;
    Ok((u, report))
}

/// `1/2 x.Ax - b.x`.
pub fn quadratic_energy(a: &CsrMatrix, b: &[f64], x: &[f64]) -> f64 {
    0.5 * dot(x, &a.matvec(x)) - dot(b, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_csr(a: &[Vec<f64>]) -> CsrMatrix {
        let n = a.len();
        let t: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, a[i][j])).collect();
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    /// Minimizer of the convex QP over the box by enumerating all 3^n
    /// patterns (lower, upper, free) and keeping the KKT point.
    fn brute_force(a: &[Vec<f64>], b: &[f64], lb: f64, ub: f64) -> Vec<f64> {
        let n = b.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let mut pat = vec![0; n];
            let mut c = code;
            for p in pat.iter_mut() {
                *p = c % 3;
                c /= 3;
            }
            let mut x = vec![0.0; n];
            for i in 0..n {
                x[i] = match pat[i] {
                    0 => lb,
                    1 => ub,
                    _ => 0.0,
                };
            }
            let free: Vec<usize> = (0..n).filter(|&i| pat[i] == 2).collect();
            if !free.is_empty() {
                let sub: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| a[i][j]).collect()).collect();
                let rhs: Vec<f64> = free
                    .iter()
                    .map(|&i| b[i] - (0..n).filter(|j| pat[*j] != 2).map(|j| a[i][j] * x[j]).sum::<f64>())
                    .collect();
                for (&i, v) in free.iter().zip(gauss_solve(sub, rhs)) {
                    x[i] = v;
                }
            }
            if x.iter().any(|&v| v < lb - 1e-12 || v > ub + 1e-12) {
                continue;
            }
            let r: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i]).collect();
            let kkt = (0..n).all(|i| match pat[i] {
                0 => r[i] >= -1e-10,
                1 => r[i] <= 1e-10,
                _ => true,
            });
            if !kkt {
                continue;
            }
            let e: f64 = 0.5 * (0..n).map(|i| x[i] * (0..n).map(|j| a[i][j] * x[j]).sum::<f64>()).sum::<f64>()
                - (0..n).map(|i| b[i] * x[i]).sum::<f64>();
            if best.as_ref().is_none_or(|(be, _)| e < *be) {
                best = Some((e, x));
            }
        }
        best.unwrap().1
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| m[i][k] * m[j][k]).sum::<f64>() + if i == j { 0.1 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn projected_residual_examples() {
        let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap();
        let free = BoundsBox::unbounded(1);
        assert_eq!(projected_residual(&a, &[4.0], &free, &[0.5]), vec![-3.0]);
        let at_lb = BoundsBox::uniform(1, 0.5, 1.0).unwrap();
        assert_eq!(projected_residual(&a, &[-4.0], &at_lb, &[0.5]), vec![0.0]);
        let capped = BoundsBox::new(vec![f64::NEG_INFINITY], vec![1.0]).unwrap();
        assert_eq!(projected_residual(&a, &[4.0], &capped, &[1.0]), vec![0.0]);
    }

    #[test]
    fn diagonal_clamps() {
        let a = CsrMatrix::identity(2);
        let p = BoxViProblem::new(a, vec![2.0, -3.0], BoundsBox::uniform(2, 0.0, 1.0).unwrap(), vec![0.5; 2]).unwrap();
        let rep = solve_box_vi(&p, &ViOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.solution, vec![1.0, 0.0]);
        assert_eq!(rep.active_lower, vec![1]);
        assert_eq!(rep.active_upper, vec![0]);
    }

    #[test]
    fn unbounded_is_one_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = dense_to_csr(&random_spd(&mut rng, 6));
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = BoxViProblem::with_default_start(a.clone(), b.clone(), BoundsBox::unbounded(6)).unwrap();
        let rep = solve_box_vi(&p, &ViOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        let x = solve_linear(&a, &b).unwrap();
        for (p, q) in rep.solution.iter().zip(&x) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..30 {
            let n = 1 + trial % 8;
            let a = random_spd(&mut rng, n);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let expect = brute_force(&a, &b, 0.0, 1.0);
            let p = BoxViProblem::with_default_start(dense_to_csr(&a), b, BoundsBox::uniform(n, 0.0, 1.0).unwrap())
                .unwrap();
            let rep = solve_box_vi(&p, &ViOptions::default()).unwrap();
            assert!(rep.converged);
            for (p, q) in rep.solution.iter().zip(&expect) {
                assert!((p - q).abs() < 1e-8, "trial {trial}");
            }
        }
    }

    #[test]
    fn fixed_dofs_stay_fixed() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        let bounds = BoundsBox::uniform(2, 0.0, 10.0).unwrap().with_fixed(&[0], &[3.0]);
        let p = BoxViProblem::with_default_start(a, vec![0.0, 1.0], bounds).unwrap();
        let rep = solve_box_vi(&p, &ViOptions::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.solution[0], 3.0);
        assert!((rep.solution[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn iteration_cap_reports_nonconvergence() {
        let a = CsrMatrix::identity(2);
        let p = BoxViProblem::new(a, vec![2.0, -3.0], BoundsBox::uniform(2, 0.0, 1.0).unwrap(), vec![0.5; 2]).unwrap();
        let opts = ViOptions { max_iter: 0, ..Default::default() };
        let rep = solve_box_vi(&p, &opts).unwrap();
        assert!(!rep.converged);
        assert!(rep.final_residual > opts.tol);
        let mut log = Vec::new();
        rep.write_log(&mut log).unwrap();
        assert!(String::from_utf8(log).unwrap().starts_with("iteration,active_lower,active_upper,residual\n0,"));
    }

    #[test]
    fn singular_reduced_matrix_is_an_error() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        let p = BoxViProblem::with_default_start(a, vec![1.0, 1.0], BoundsBox::unbounded(2)).unwrap();
        assert!(matches!(solve_box_vi(&p, &ViOptions::default()), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let r = BoxViProblem::new(CsrMatrix::identity(2), vec![0.0; 3], BoundsBox::unbounded(2), vec![0.0; 2]);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn vp_matches_conjugate_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 7;
        let a = dense_to_csr(&random_spd(&mut rng, n));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Plain CG as the oracle.
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut p = r.clone();
        for _ in 0..200 {
            let rr = dot(&r, &r);
            if rr < 1e-30 {
                break;
            }
            let ap = a.matvec(&p);
            let alpha = rr / dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let beta = dot(&r, &r) / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        let u = solve_vp(&AssembledSystem::new(a, b)).unwrap();
        for (p, q) in u.iter().zip(&x) {
            assert!((p - q).abs() < 1e-10);
        }
        let id = solve_vp(&AssembledSystem::new(CsrMatrix::identity(3), vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(id, vec![1.0, 2.0, 3.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn feasible_and_energy_monotone(seed in any::<u64>(), n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = dense_to_csr(&random_spd(&mut rng, n));
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let bounds = BoundsBox::uniform(n, 0.0, 1.0).unwrap();
            let p = BoxViProblem::new(a.clone(), b.clone(), bounds.clone(), x0).unwrap();
            // Re-run with growing iteration caps to recover every iterate.
            let mut prev = f64::INFINITY;
            let full = solve_box_vi(&p, &ViOptions::default()).unwrap();
            prop_assert!(full.converged);
            prop_assert!(bounds.contains(&full.solution, 1e-12));
            for k in 0..=full.iterations {
                let rep = solve_box_vi(&p, &ViOptions { max_iter: k, ..Default::default() }).unwrap();
                prop_assert!(bounds.contains(&rep.solution, 1e-12));
                let e = quadratic_energy(&a, &b, &rep.solution);
                if k > 0 {
                    prop_assert!(e <= prev + 1e-12 * prev.abs().max(1.0));
                }
                prev = e;
            }
        }
    }
}
