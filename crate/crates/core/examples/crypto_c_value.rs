//! Consensus value of a crypto asset and the implied CARA demand.
//!
//! cargo run --release --example crypto_c_value

use bubble_hjb::grid::{Grid1D, ScalarField};
use bubble_hjb::scenarios::{solve_scenario, CryptoScenario, Scenario};
use bubble_hjb::Result;

fn scenario(grid: Grid1D, n_agents: f64, r1: f64) -> Scenario {
    Scenario::Crypto(CryptoScenario {
        nu: 0.1,
        c: 1.0,
        k_asset: 1.0,
        n_agents,
        r1,
        r0: ScalarField::from_fn(grid, |x| 5.0 - 10.0 * x),
    })
}

fn main() -> Result<()> {
    let grid = Grid1D::new(1024)?;
    let base = scenario(grid, 2.0, -1.0);
    let (rep, alloc) = solve_scenario(&base)?;
    let alloc = alloc.expect("the demo has a bubble");
    println!(
        "eps = {}, regime {}, lambda1 = {:.6}",
        base.eps(),
        rep.regime(),
        rep.regime.lambda1
    );
    println!("{:>6} {:>12} {:>14} {:>10}", "x", "u", "theta/wealth", "demand");
    for i in (0..grid.n()).step_by(128).chain([grid.n() - 1]) {
        let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.6}"));
        println!(
            "{:>6.3} {:>12.6} {:>14} {:>10}",
            grid.x(i),
            rep.u.values()[i],
            show(alloc.theta[i]),
            show(alloc.demand[i])
        );
    }
    println!(
        "market clearing error on [0.1, 0.9]: {:.3e}",
        alloc.clearing_error
    );

    // twice as many agents halve eps and double the price
    let (doubled, _) = solve_scenario(&scenario(grid, 4.0, -1.0))?;
    println!(
        "N -> 2N: max |u_2N - 2 u_N| = {:.3e}",
        doubled.u.distance(&rep.u.scaled(2.0))
    );
    // a better crypto return raises the price everywhere
    let (better, _) = solve_scenario(&scenario(grid, 2.0, -0.9))?;
    let lift = better.u.zip_map(&rep.u, |a, b| a - b).min();
    println!("r1 -1.0 -> -0.9: smallest price increase {lift:.3e}");
    Ok(())
}
