use std::f64::consts::PI;

use bubble_hjb::control_mc::{
    estimate_feedback_cost, estimate_value, perturbed_control_problem, simulate_reflected_path, McConfig,
};
use bubble_hjb::grid::centered_derivative;
use bubble_hjb::scenarios::{build_problem, solve_scenario, CryptoScenario, RealEstateScenario, Scenario};
use bubble_hjb::spectral::{existence_gate, Regime};
use bubble_hjb::{solve_positive, EllipticProblem, Error, Grid1D, ScalarField};

fn grid() -> Grid1D {
    Grid1D::new(1024).unwrap()
}

fn below(lo: &ScalarField, hi: &ScalarField, slack: f64) -> bool {
    lo.values().iter().zip(hi.values()).all(|(l, h)| *l <= h + slack)
}

#[test]
fn reflected_diffusion_forgets_its_start() {
    // the invariant law of driftless reflected diffusion on [0, 1] is uniform
    let cfg = McConfig {
        dt: 1e-2,
        horizon: 50.0,
        master_seed: 2024,
        ..McConfig::default()
    };
    let paths = 100_000u64;
    let drift = ScalarField::zeros(Grid1D::new(65).unwrap());
    let mut bins = [0u64; 10];
    for k in 0..paths {
        let path = simulate_reflected_path(0.5, &drift, 0.05, &cfg, k).unwrap();
        let x = *path.last().unwrap();
        bins[((x * 10.0) as usize).min(9)] += 1;
    }
    let expected = paths as f64 / 10.0;
    let chi2: f64 = bins
        .iter()
        .map(|&b| (b as f64 - expected).powi(2) / expected)
        .sum();
    // nine degrees of freedom: mean 9, standard deviation sqrt(18)
    assert!(chi2 <= 9.0 + 3.0 * 18f64.sqrt(), "chi2 = {chi2}, bins {bins:?}");
}

#[test]
fn feedback_from_the_solution_beats_other_controls() {
    let g = grid();
    let p = EllipticProblem::new(0.1, 0.1, ScalarField::from_fn(g, |x| 10.0 * x - 6.0));
    let pp = perturbed_control_problem(&p, 1e-3);
    let w = solve_positive(&pp).unwrap().u;
    let cfg = McConfig {
        paths: 4000,
        ..McConfig::default()
    };
    let best = centered_derivative(&w).scaled(-1.0);
    let mut compared = 0;
    for x0 in [0.3, 0.7] {
        let opt = estimate_value(&pp, &w, x0, &cfg).unwrap();
        for alt in [best.scaled(0.5), best.scaled(1.5), ScalarField::zeros(g)] {
            let other = match estimate_feedback_cost(&pp, &alt, x0, &cfg) {
                Ok(est) => est,
                // the discount outgrows the control, so the cost is infinite
                Err(Error::ExplodingWeight { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            compared += 1;
            let slack = 3.0 * (opt.std_error + other.std_error);
            assert!(
                opt.mean <= other.mean + slack,
                "x0 = {x0}: optimal {} +- {} vs alternative {} +- {}",
                opt.mean,
                opt.std_error,
                other.mean,
                other.std_error
            );
        }
    }
    assert!(compared >= 4, "only {compared} alternatives had finite cost");
}

#[test]
fn estimates_do_not_depend_on_the_worker_count() {
    let g = grid();
    let p = EllipticProblem::new(0.1, 0.5, ScalarField::from_fn(g, |x| 10.0 * x - 6.0))
        .with_source(ScalarField::constant(g, 1e-3));
    let u = solve_positive(&p).unwrap().u;
    let cfg = McConfig {
        paths: 3000,
        ..McConfig::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_value(&p, &u, 0.5, &cfg).unwrap())
    };
    let (one, four) = (run(1), run(4));
    assert_eq!(one.mean.to_bits(), four.mean.to_bits());
    assert_eq!(one.std_error.to_bits(), four.std_error.to_bits());
}

#[test]
fn price_vanishes_as_the_quadratic_coefficient_grows() {
    let g = grid();
    let p = EllipticProblem::new(0.2, 1.0, ScalarField::from_fn(g, |x| (2.0 * PI * x).cos()));
    let u1 = solve_positive(&p).unwrap().u;
    let mut last = f64::INFINITY;
    for eps in [1.0, 10.0, 100.0, 1000.0] {
        let u = solve_positive(&p.clone().with_eps(eps)).unwrap().u;
        assert!(u.sup_norm() < last);
        let gap = u.distance(&u1.scaled(1.0 / eps));
        assert!(gap <= 1e-8, "eps = {eps}: |u - u1 / eps| = {gap:e}");
        last = u.sup_norm();
    }
    assert!(last < 1e-3 * u1.sup_norm());
}

fn crypto(g: Grid1D, n_agents: f64, r1: f64, r0_level: f64) -> Scenario {
    Scenario::Crypto(CryptoScenario {
        nu: 0.1,
        c: 1.0,
        k_asset: 1.0,
        n_agents,
        r1,
        r0: ScalarField::from_fn(g, |x| r0_level - 4.0 * x),
    })
}

#[test]
fn crypto_scenario_facts() {
    let g = grid();
    let base = solve_scenario(&crypto(g, 2.0, -0.5, 1.5)).unwrap().0.u;
    assert!(base.min() > 0.0);

    // twice the agents, half the quadratic coefficient, twice the price
    let doubled = solve_scenario(&crypto(g, 4.0, -0.5, 1.5)).unwrap().0.u;
    assert!(doubled.distance(&base.scaled(2.0)) <= 1e-8 * (1.0 + doubled.sup_norm()));

    let better_asset = solve_scenario(&crypto(g, 2.0, -0.4, 1.5)).unwrap().0.u;
    assert!(below(&base, &better_asset, 1e-8));
    let better_fiat = solve_scenario(&crypto(g, 2.0, -0.5, 1.6)).unwrap().0.u;
    assert!(below(&better_fiat, &base, 1e-8));

    // fiat return falls with the state, so the price rises with it
    assert!(base.values().windows(2).all(|w| w[1] >= w[0] - 1e-8));
}

#[test]
fn rent_puts_a_floor_under_the_real_estate_price() {
    let g = grid();
    let scn = |rent: f64, r1: f64| {
        Scenario::RealEstate(RealEstateScenario {
            nu: 0.05,
            gamma: 2.0,
            k_asset: 1.0,
            q_wealth: 4.0,
            r1,
            r0: ScalarField::from_fn(g, |x| 1.0 - 2.0 * x),
            f: ScalarField::from_fn(g, |x| rent * (1.0 + 0.5 * (PI * x).cos())),
        })
    };
    let bare = solve_scenario(&scn(0.0, -0.3)).unwrap().0.u;
    let rented = solve_scenario(&scn(0.02, -0.3)).unwrap().0.u;
    assert!(below(&bare, &rented, 1e-8));
    assert!(rented.min() > bare.min());

    // without a bubble the rent alone still carries a positive price
    let p = build_problem(&scn(0.02, -3.0)).unwrap();
    assert_ne!(existence_gate(p.nu, &p.a).unwrap().regime, Regime::UniquePositive);
    let (rep, _) = solve_scenario(&scn(0.02, -3.0)).unwrap();
    assert!(rep.u.min() > 0.0);
}
