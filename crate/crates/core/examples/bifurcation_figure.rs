//! Branches lambda -> ||u|| of -nu u'' + eps (u')^2 + u = lambda r u for
//! several eps, written as CSV and SVG.
//!
//! cargo run --release --example bifurcation_figure [out_dir]

use std::f64::consts::PI;
use std::fs::{self, File};
use std::path::PathBuf;

use bubble_hjb::branch::{lambda_grid_above, trace_branch};
use bubble_hjb::cli::svg::{line_chart, Series};
use bubble_hjb::spectral::critical_lambda_auto;
use bubble_hjb::{Grid1D, Result, ScalarField};

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/figure".into()));
    fs::create_dir_all(&out)?;
    let grid = Grid1D::new(1024)?;
    let nu = 0.1;
    let r = ScalarField::from_fn(grid, |x| 1.0 - (2.0 * PI * x).cos());
    let lambda_c = critical_lambda_auto(nu, &r)?;
    let mut lambdas = vec![lambda_c - 0.2, lambda_c - 0.1, lambda_c];
    lambdas.extend(lambda_grid_above(lambda_c, 1.0, 30));

    let data = trace_branch(nu, &r, &[0.5, 1.0, 2.0], &lambdas)?;
    data.check_monotone(1e-10)?;
    data.check_eps_ordering(1e-8)?;
    println!("lambda_c = {lambda_c:.8}");
    for (i, b) in data.branches.iter().enumerate() {
        println!(
            "eps = {}: ||u|| at lambda_c + 1 is {:.5}, branch leaves zero near {:.5}",
            b[0].eps,
            b.last().map_or(0.0, |p| p.sup_norm),
            data.vanishing_point(i).unwrap_or(f64::NAN)
        );
    }
    data.write_csv(File::create(out.join("branch.csv"))?)?;
    let series: Vec<Series> = data
        .branches
        .iter()
        .map(|b| Series {
            label: format!("eps = {}", b[0].eps),
            points: b.iter().map(|p| (p.lambda, p.sup_norm)).collect(),
        })
        .collect();
    fs::write(
        out.join("branch.svg"),
        line_chart("positive branch", "lambda", "sup norm", &series),
    )?;
    println!("wrote {}/branch.csv and branch.svg", out.display());
    Ok(())
}
