//! The active-set solver on a hand-sized problem: a 1D obstacle problem
//! with a bump obstacle.

use bernstein_vi::space::BoundsBox;
use bernstein_vi::sparse::CsrMatrix;
use bernstein_vi::vi::{solve_box_vi, BoxViProblem, ViOptions};

fn main() -> bernstein_vi::Result<()> {
    let n = 15;
    let h = 1.0 / (n + 1) as f64;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0 / h));
        if i > 0 {
            t.push((i, i - 1, -1.0 / h));
        }
        if i + 1 < n {
            t.push((i, i + 1, -1.0 / h));
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &t)?;
    // Downward load pushes the string onto the obstacle.
    let b = vec![-8.0 * h; n];
    let lb: Vec<f64> = (1..=n)
        .map(|i| {
            let x = i as f64 * h;
            -0.3 + 0.2 * (std::f64::consts::PI * x).sin()
        })
        .collect();
    let bounds = BoundsBox::new(lb.clone(), vec![f64::INFINITY; n])?;
    let problem = BoxViProblem::with_default_start(a, b, bounds)?;
    let report = solve_box_vi(&problem, &ViOptions::default())?;

    println!("converged {} after {} iterations, residual {:.2e}", report.converged, report.iterations, report.final_residual);
    for (i, (x, l)) in report.solution.iter().zip(&lb).enumerate() {
        let mark = if report.active_lower.contains(&i) { "contact" } else { "" };
        println!("{:>3} u = {:+.5} obstacle = {:+.5} {mark}", i + 1, x, l);
    }
    Ok(())
}
