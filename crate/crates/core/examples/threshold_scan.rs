//! How far the fiat return can rise before the crypto bubble disappears.
//!
//! cargo run --release --example threshold_scan

use bubble_hjb::grid::{Grid1D, ScalarField};
use bubble_hjb::scenarios::{build_problem, gate_threshold_scan, CryptoScenario, Scenario};
use bubble_hjb::{solve_positive, Result};

fn main() -> Result<()> {
    let grid = Grid1D::new(1024)?;
    let scn = Scenario::Crypto(CryptoScenario {
        nu: 0.1,
        c: 1.0,
        k_asset: 1.0,
        n_agents: 2.0,
        r1: -0.2,
        r0: ScalarField::from_fn(grid, |x| 1.0 - 3.0 * x),
    });
    let shifts: Vec<f64> = (0..=12).map(|k| -0.3 + 0.1 * k as f64).collect();
    let scan = gate_threshold_scan(&scn, &shifts)?;
    println!("{:>8} {:>14}  regime", "shift", "lambda1");
    for row in &scan.rows {
        println!("{:>8.2} {:>14.8}  {}", row.shift, row.lambda1, row.regime);
    }
    let t = scan.threshold.expect("sign change inside the scan");
    println!("bubble disappears once r0 rises by {t:.8}");
    for gap in [0.2, 0.1, 0.05] {
        let u = solve_positive(&build_problem(&scn.with_r0_shift(t - gap))?)?.u;
        println!("  shift {:.4}: ||u|| = {:.6}", t - gap, u.sup_norm());
    }
    Ok(())
}
