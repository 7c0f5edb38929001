//! Relaxation of the evolution problem to the stationary price, and decay to
//! zero when no bubble exists.
//!
//! cargo run --release --example parabolic_relaxation

use bubble_hjb::parabolic::{evolve_to_steady, EvolveOptions};
use bubble_hjb::{EllipticProblem, Grid1D, Result, ScalarField};

fn main() -> Result<()> {
    let grid = Grid1D::new(512)?;
    let opts = EvolveOptions::default();
    for (name, a) in [
        ("a = 3x - 1.2", ScalarField::from_fn(grid, |x| 3.0 * x - 1.2)),
        ("a = x - 1", ScalarField::from_fn(grid, |x| x - 1.0)),
    ] {
        let p = EllipticProblem::new(0.1, 0.5, a);
        let ev = evolve_to_steady(&p, &ScalarField::constant(grid, 0.1), &opts)?;
        println!("{name}: converged = {} after {} steps", ev.converged, ev.steps);
        let stride = (ev.times.len() / 8).max(1);
        for k in (0..ev.times.len()).step_by(stride) {
            println!(
                "  t = {:>7.2}  gap = {:.3e}  sup = {:.6}",
                ev.times[k], ev.gaps[k], ev.sup_norms[k]
            );
        }
        println!("  final gap {:.3e}", ev.final_gap().unwrap_or(f64::NAN));
    }
    Ok(())
}
