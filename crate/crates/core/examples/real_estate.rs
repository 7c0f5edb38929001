//! Real-estate price with and without rent, and the CRRA allocation.
//!
//! cargo run --release --example real_estate

use bubble_hjb::grid::{Grid1D, ScalarField};
use bubble_hjb::scenarios::{solve_scenario, RealEstateScenario, Scenario};
use bubble_hjb::Result;

fn main() -> Result<()> {
    let grid = Grid1D::new(1024)?;
    let with_rent = |rent: f64| {
        Scenario::RealEstate(RealEstateScenario {
            nu: 0.05,
            gamma: 2.0,
            k_asset: 1.0,
            q_wealth: 4.0,
            r1: -0.3,
            r0: ScalarField::from_fn(grid, |x| 1.0 - 2.0 * x),
            f: ScalarField::constant(grid, rent),
        })
    };
    for rent in [0.0, 0.01, 0.05] {
        let scn = with_rent(rent);
        let (rep, alloc) = solve_scenario(&scn)?;
        let alloc = alloc.expect("positive regime");
        let mid = grid.n() / 2;
        println!(
            "rent {rent:<5} eps {:.3}  u(0) {:.5}  u(1/2) {:.5}  u(1) {:.5}  theta*(1/2) {:.5}  clearing {:.2e}",
            scn.eps(),
            rep.u.values()[0],
            rep.u.values()[mid],
            rep.u.values()[grid.n() - 1],
            alloc.theta[mid].unwrap_or(f64::NAN),
            alloc.clearing_error
        );
    }
    Ok(())
}
