//! Monte Carlo checks of the control representation: the feedback cost
//! reproduces the perturbed solution, and the discount weight grows at the
//! rate given by the principal eigenvalue.
//!
//! cargo run --release --example control_monte_carlo [paths]

use std::f64::consts::PI;

use bubble_hjb::control_mc::{estimate_growth_rate, estimate_value, perturbed_control_problem, McConfig};
use bubble_hjb::{principal_eigenpair, solve_positive, EllipticProblem, Grid1D, Result, ScalarField};

fn main() -> Result<()> {
    let paths = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10_000);
    let grid = Grid1D::new(1024)?;
    let p = EllipticProblem::new(0.1, 0.1, ScalarField::from_fn(grid, |x| 10.0 * x - 6.0));
    let pp = perturbed_control_problem(&p, 1e-3);
    let u = solve_positive(&pp)?.u;
    let cfg = McConfig {
        paths,
        ..McConfig::default()
    };
    for x0 in [0.25, 0.5, 0.75] {
        let est = estimate_value(&pp, &u, x0, &cfg)?;
        println!(
            "x0 = {x0}: MC {:.6} +- {:.6} vs PDE {:.6} (truncation mass {:.1e})",
            est.mean,
            est.std_error,
            u.interpolate(x0),
            est.truncation_mass
        );
    }

    let a = ScalarField::from_fn(grid, |x| (2.0 * PI * x).cos());
    let zero = ScalarField::zeros(grid);
    let lambda1 = principal_eigenpair(0.1, &zero, &a)?.lambda1;
    let growth = estimate_growth_rate(
        0.1,
        &zero,
        &a,
        &McConfig {
            paths,
            dt: 1e-2,
            horizon: 40.0,
            ..McConfig::default()
        },
    )?;
    println!(
        "growth rate for a = cos(2 pi x): MC {:.5} +- {:.5} vs -lambda1 = {:.5}",
        growth.mean, growth.std_error, -lambda1
    );
    Ok(())
}
