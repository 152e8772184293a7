//! Three ways to keep an approximation of a [0, 1]-valued step inside
//! [0, 1]: plain L2 projection (overshoots), the coefficient-box
//! constrained projection, and the contraction of a nodal interpolant
//! towards the interval midpoint.

use std::sync::Arc;

use bernstein_vi::approx::{despres_construction, sampled_range, sup_norm_estimate, RangeInterval};
use bernstein_vi::assembly::ScalarField;
use bernstein_vi::mesh::{build_mesh, DomainKind, DomainSpec, Point};
use bernstein_vi::space::{BoundsBox, FunctionSpace};
use bernstein_vi::vi::{constrained_l2_projection, ViOptions};

fn smooth_step([x, y]: Point) -> f64 {
    0.5 * (1.0 + (40.0 * (x + 0.5 * y - 0.6)).tanh())
}

fn main() -> bernstein_vi::Result<()> {
    let mesh = Arc::new(build_mesh(DomainSpec::new(DomainKind::UnitSquare, 8))?);
    let space = FunctionSpace::new(mesh, 2)?;
    let n = space.ndofs();

    let (free, _) = constrained_l2_projection(&space, ScalarField::new(smooth_step), &BoundsBox::unbounded(n), &ViOptions::default())?;
    let (boxed, report) =
        constrained_l2_projection(&space, ScalarField::new(smooth_step), &BoundsBox::uniform(n, 0.0, 1.0)?, &ViOptions::default())?;

    let interp = space.interpolate(smooth_step);
    let err = sup_norm_estimate(smooth_step, &interp);
    let contracted = despres_construction(&interp, RangeInterval::new(0.0, 1.0)?, err)?;

    for (name, u) in [("L2 projection", &free), ("boxed projection", &boxed), ("interpolant", &interp), ("contracted", &contracted)] {
        let (lo, hi) = sampled_range(u);
        println!(
            "{name:<17} sampled range [{lo:+.4}, {hi:.4}], coefficients [{:+.4}, {:.4}], sup error {:.4}",
            u.min_coeff(),
            u.max_coeff(),
            sup_norm_estimate(smooth_step, u)
        );
    }
    println!("boxed projection took {} active-set iterations", report.iterations);
    Ok(())
}
