//! Principal eigenvalue and existence verdict for a few potentials.
//!
//! cargo run --release --example eigen_gate

use std::f64::consts::PI;

use bubble_hjb::spectral::{critical_lambda_auto, existence_gate_with_drift, principal_eigenpair};
use bubble_hjb::{Grid1D, Result, ScalarField};

fn main() -> Result<()> {
    let grid = Grid1D::new(1024)?;
    let nu = 0.1;
    let zero = ScalarField::zeros(grid);
    let cases: [(&str, ScalarField, ScalarField); 5] = [
        ("a = -1", ScalarField::constant(grid, -1.0), zero.clone()),
        (
            "a = cos(2 pi x)",
            ScalarField::from_fn(grid, |x| (2.0 * PI * x).cos()),
            zero.clone(),
        ),
        (
            "a = 3x - 1.2",
            ScalarField::from_fn(grid, |x| 3.0 * x - 1.2),
            zero.clone(),
        ),
        (
            "a = 3x - 1.2, b = -2",
            ScalarField::from_fn(grid, |x| 3.0 * x - 1.2),
            ScalarField::constant(grid, -2.0),
        ),
        ("a = 0.5", ScalarField::constant(grid, 0.5), zero.clone()),
    ];
    println!("{:<24} {:>14} {:>10}  regime", "potential", "lambda1", "min a");
    for (name, a, b) in &cases {
        let v = existence_gate_with_drift(nu, b, a)?;
        println!("{name:<24} {:>14.10} {:>10.4}  {}", v.lambda1, v.min_a, v.regime);
    }

    let a = ScalarField::from_fn(grid, |x| 3.0 * x - 1.2);
    let pair = principal_eigenpair(nu, &zero, &a)?;
    println!(
        "\neigenfunction for a = 3x - 1.2: phi(0) = {:.4}, phi(1) = {:.4}, bracket width {:.2e}, {} sweeps",
        pair.phi.values()[0],
        pair.phi.values()[grid.n() - 1],
        pair.bracket.1 - pair.bracket.0,
        pair.iterations
    );

    let r = ScalarField::from_fn(grid, |x| 1.0 - (2.0 * PI * x).cos());
    println!(
        "critical coupling for r = 1 - cos(2 pi x): {:.10}",
        critical_lambda_auto(nu, &r)?
    );
    Ok(())
}
