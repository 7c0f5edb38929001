//! Command pipelines. Every command writes its artifacts under the output
//! directory and returns the list of checks it ran.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Command, ModelConfig, RunConfig};
use super::svg::{line_chart, Series};
use crate::branch::{branch_problem, norm_matched_lambda, trace_branch};
use crate::control_mc::{
    estimate_growth_rate, estimate_value, perturbed_control_problem, McConfig, MC_CSV_HEADER,
};
use crate::elliptic::{solve_positive_with, EllipticProblem, SolveReport, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField};
use crate::parabolic::{evolve_with_reference, EvolveOptions};
use crate::scenarios::{self, CryptoScenario, RealEstateScenario, Scenario};
use crate::spectral::{critical_lambda_auto, principal_eigenpair, GateVerdict, Regime, GATE_TOL};

/// Tolerance of the parabolic gap check.
pub const PARABOLIC_GAP_TOL: f64 = 1e-4;
/// Relative bias allowance of the Monte Carlo value check.
pub const MC_BIAS: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckRecord {
    fn new(
        check: impl Into<String>,
        pass: bool,
        value: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            check: check.into(),
            pass,
            value,
            tolerance,
            detail: detail.into(),
        }
    }

    fn at_most(check: impl Into<String>, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self::new(check, value <= tolerance, value, tolerance, detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<CheckRecord>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn file(&mut self, dir: &Path, name: &str) -> Result<BufWriter<File>> {
        let path = dir.join(name);
        let f = File::create(&path)?;
        self.artifacts.push(path);
        Ok(BufWriter::new(f))
    }

    fn field(&mut self, dir: &Path, name: &str, u: &ScalarField) -> Result<()> {
        let mut w = self.file(dir, name)?;
        u.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        let mut w = self.file(dir, name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn report(&mut self, dir: &Path, name: &str) -> Result<()> {
        let mut w = self.file(dir, name)?;
        for c in &self.checks {
            serde_json::to_writer(&mut w, c)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What the `[problem]` section describes, evaluated on its grid.
pub struct Built {
    pub problem: EllipticProblem,
    pub scenario: Option<Scenario>,
}

pub fn build(cfg: &RunConfig) -> Result<Built> {
    let pc = &cfg.problem;
    let grid = Grid1D::new(pc.n)?;
    let scenario = match &pc.model {
        ModelConfig::None => {
            return Err(Error::InvalidParameter(
                "this command needs a model in [problem] (crypto, real_estate or generic)".into(),
            ))
        }
        ModelConfig::Generic { eps, a, b, f } => {
            let problem = EllipticProblem::new(pc.nu, *eps, a.evaluate(grid)?)
                .with_drift(b.evaluate(grid)?)
                .with_source(f.evaluate(grid)?);
            problem.validate()?;
            return Ok(Built {
                problem,
                scenario: None,
            });
        }
        ModelConfig::Crypto {
            c,
            k_asset,
            n_agents,
            r1,
            r0,
        } => Scenario::Crypto(CryptoScenario {
            nu: pc.nu,
            c: *c,
            k_asset: *k_asset,
            n_agents: *n_agents,
            r1: *r1,
            r0: r0.evaluate(grid)?,
        }),
        ModelConfig::RealEstate {
            gamma,
            k_asset,
            q_wealth,
            r1,
            r0,
            rent,
        } => Scenario::RealEstate(RealEstateScenario {
            nu: pc.nu,
            gamma: *gamma,
            k_asset: *k_asset,
            q_wealth: *q_wealth,
            r1: *r1,
            r0: r0.evaluate(grid)?,
            f: rent.evaluate(grid)?,
        }),
    };
    Ok(Built {
        problem: scenarios::build_problem(&scenario)?,
        scenario: Some(scenario),
    })
}

pub fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        step_tol: cfg.solver.tol,
        residual_tol: cfg.solver.tol,
        max_outer: cfg.solver.max_outer,
        ..SolverOptions::default()
    }
}

fn evolve_options(cfg: &RunConfig) -> EvolveOptions {
    EvolveOptions {
        dt: cfg.solver.dt,
        t_max: cfg.solver.t_max,
        tol: cfg.solver.evolve_tol,
        sample_every: 10,
    }
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    McConfig {
        paths: cfg.mc.paths,
        dt: cfg.mc.dt,
        horizon: cfg.mc.horizon,
        master_seed: cfg.mc.seed,
        x0: cfg.mc.x0.first().copied().unwrap_or(0.5),
        weight_floor: cfg.mc.weight_floor,
    }
}

/// Runs `command` and writes its artifacts under `cfg.out_dir`.
pub fn run(cfg: &RunConfig, command: Command) -> Result<Outcome> {
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut out = Outcome::default();
    match command {
        Command::Solve => run_solve(cfg, &dir, &mut out)?,
        Command::Eigen => run_eigen(cfg, &dir, &mut out)?,
        Command::Evolve => run_evolve(cfg, &dir, &mut out)?,
        Command::Branch => run_branch(cfg, &dir, &mut out)?,
        Command::VerifyControl => run_verify_control(cfg, &dir, &mut out)?,
        Command::Scenario => run_scenario(cfg, &dir, &mut out)?,
        Command::VerifyAll => run_verify_all(cfg, &dir, &mut out)?,
    }
    Ok(out)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    eps: f64,
    sup_norm: f64,
    min: f64,
    #[serde(flatten)]
    report: &'a SolveReport,
}

fn solve_checks(cfg: &RunConfig, p: &EllipticProblem, rep: &SolveReport, out: &mut Outcome) {
    let sup = rep.u.sup_norm();
    let positive = rep.regime() == Regime::UniquePositive;
    let consistent = if positive {
        rep.u.min() > 0.0
    } else {
        p.f.sup_norm() > 0.0 || sup == 0.0
    };
    out.checks.push(CheckRecord::new(
        "solve",
        consistent,
        rep.u.min(),
        0.0,
        format!("{} after {} outer iterations", rep.regime(), rep.outer_iterations),
    ));
    out.checks.push(CheckRecord::at_most(
        "residual",
        rep.final_residual,
        cfg.solver.tol * (1.0 + sup),
        "sup-norm residual of the discrete equation",
    ));
    out.checks.push(CheckRecord::at_most(
        "monotone",
        rep.monotone_violation,
        SolverOptions::default().monotone_tol,
        "largest ordering violation of the outer iterates",
    ));
}

fn run_solve(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let b = build(cfg)?;
    let rep = solve_positive_with(&b.problem, &solver_options(cfg))?;
    solve_checks(cfg, &b.problem, &rep, out);
    out.field(dir, "solution.csv", &rep.u)?;
    let summary = SolveSummary {
        eps: b.problem.eps,
        sup_norm: rep.u.sup_norm(),
        min: rep.u.min(),
        report: &rep,
    };
    out.json(dir, "solve.json", &summary)?;
    out.report(dir, "solve.jsonl")
}

#[derive(Serialize)]
struct EigenSummary {
    lambda1: f64,
    regime: Regime,
    min_a: f64,
    bracket: (f64, f64),
    residual: f64,
    iterations: usize,
}

fn run_eigen(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let b = build(cfg)?;
    let p = &b.problem;
    let pair = principal_eigenpair(p.nu, &p.b, &p.a)?;
    let verdict = GateVerdict::classify(pair.lambda1, p.a.min());
    out.checks.push(CheckRecord::new(
        "gate",
        true,
        pair.lambda1,
        GATE_TOL,
        verdict.regime.to_string(),
    ));
    out.field(dir, "phi.csv", &pair.phi)?;
    out.json(
        dir,
        "eigen.json",
        &EigenSummary {
            lambda1: pair.lambda1,
            regime: verdict.regime,
            min_a: verdict.min_a,
            bracket: pair.bracket,
            residual: pair.residual,
            iterations: pair.iterations,
        },
    )?;
    out.report(dir, "eigen.jsonl")
}

fn parabolic_check(
    cfg: &RunConfig,
    p: &EllipticProblem,
    reference: &ScalarField,
    dir: &Path,
    out: &mut Outcome,
) -> Result<()> {
    let u0 = ScalarField::constant(p.grid(), cfg.solver.u0);
    let ev = evolve_with_reference(p, &u0, &evolve_options(cfg), Some(reference))?;
    let gap = ev.final_gap().unwrap_or(f64::INFINITY);
    out.checks.push(CheckRecord::at_most(
        "parabolic_gap",
        gap,
        PARABOLIC_GAP_TOL,
        format!(
            "t = {:.2} after {} steps, converged = {}",
            ev.times.last().copied().unwrap_or(0.0),
            ev.steps,
            ev.converged
        ),
    ));
    let mut w = out.file(dir, "evolution.csv")?;
    ev.write_csv(&mut w)?;
    w.flush()?;
    out.field(dir, "u_final.csv", &ev.u_final)
}

fn run_evolve(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let b = build(cfg)?;
    let rep = solve_positive_with(&b.problem, &solver_options(cfg))?;
    parabolic_check(cfg, &b.problem, &rep.u, dir, out)?;
    out.report(dir, "evolve.jsonl")
}

fn value_checks(cfg: &RunConfig, p: &EllipticProblem, dir: &Path, out: &mut Outcome) -> Result<()> {
    let delta = cfg.mc.perturbation;
    let pp = perturbed_control_problem(p, delta);
    let rep = solve_positive_with(&pp, &solver_options(cfg))?;
    let mut w = out.file(dir, "mc.csv")?;
    writeln!(w, "{MC_CSV_HEADER}")?;
    let base = mc_config(cfg);
    for &x0 in &cfg.mc.x0 {
        let est = estimate_value(&pp, &rep.u, x0, &base)?;
        let exact = rep.u.interpolate(x0);
        writeln!(w, "{}", est.csv_row(x0))?;
        out.checks.push(CheckRecord::at_most(
            format!("mc_value_x0={x0}"),
            (est.mean - exact).abs(),
            3.0 * est.std_error + MC_BIAS * exact,
            format!(
                "estimate {:.6e} +- {:.2e} vs elliptic {:.6e} (perturbation {delta:e}, truncation mass {:.2e})",
                est.mean, est.std_error, exact, est.truncation_mass
            ),
        ));
    }
    w.flush()?;
    Ok(())
}

fn run_verify_control(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let b = build(cfg)?;
    let p = &b.problem;
    let pair = principal_eigenpair(p.nu, &p.b, &p.a)?;
    if GateVerdict::classify(pair.lambda1, p.a.min()).passes() || p.f.sup_norm() > 0.0 {
        value_checks(cfg, p, dir, out)?;
    }
    let growth_cfg = McConfig {
        paths: cfg.mc.growth_paths,
        dt: cfg.mc.growth_dt,
        horizon: cfg.mc.growth_horizon,
        ..mc_config(cfg)
    };
    let est = estimate_growth_rate(p.nu, &p.b, &p.a, &growth_cfg)?;
    let tol = (0.05_f64).max(3.0 * est.std_error);
    out.checks.push(CheckRecord::at_most(
        "growth_rate",
        (est.mean + pair.lambda1).abs(),
        tol,
        format!(
            "estimate {:.6} +- {:.2e} vs -lambda1 = {:.6}",
            est.mean, est.std_error, -pair.lambda1
        ),
    ));
    out.report(dir, "control.jsonl")
}

#[derive(Serialize)]
struct ScenarioSummary {
    eps: f64,
    regime: Regime,
    lambda1: f64,
    sup_norm: f64,
    clearing_error: Option<f64>,
    threshold_shift: Option<f64>,
}

fn run_scenario(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let b = build(cfg)?;
    let scn = b
        .scenario
        .ok_or_else(|| Error::InvalidParameter("`scenario` needs model = crypto or real_estate".into()))?;
    let rep = solve_positive_with(&b.problem, &solver_options(cfg))?;
    solve_checks(cfg, &b.problem, &rep, out);
    let alloc = match rep.regime() {
        Regime::UniquePositive => Some(scenarios::allocation_profile(&scn, &rep.u, &rep)?),
        _ => None,
    };
    if let Some(a) = &alloc {
        let mut w = out.file(dir, "allocation.csv")?;
        a.write_csv(&rep.u, &mut w)?;
        w.flush()?;
    } else {
        out.field(dir, "solution.csv", &rep.u)?;
    }

    let spread = rep.regime.lambda1.abs() + 0.5;
    let shifts: Vec<f64> = (0..=16)
        .map(|k| -spread + 3.0 * spread * k as f64 / 16.0)
        .collect();
    let scan = scenarios::gate_threshold_scan(&scn, &shifts)?;
    let mut w = out.file(dir, "threshold.csv")?;
    writeln!(w, "shift,lambda1,regime")?;
    for row in &scan.rows {
        writeln!(w, "{:.10e},{:.16e},{}", row.shift, row.lambda1, row.regime)?;
    }
    w.flush()?;
    out.json(
        dir,
        "scenario.json",
        &ScenarioSummary {
            eps: scn.eps(),
            regime: rep.regime(),
            lambda1: rep.regime.lambda1,
            sup_norm: rep.u.sup_norm(),
            clearing_error: alloc.as_ref().map(|a| a.clearing_error),
            threshold_shift: scan.threshold,
        },
    )?;
    out.report(dir, "scenario.jsonl")
}

fn run_branch(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let bc = &cfg.branch;
    let nu = cfg.problem.nu;
    let grid = Grid1D::new(cfg.problem.n)?;
    let r = bc.r.evaluate(grid)?;
    let lambda_c = critical_lambda_auto(nu, &r)?;
    let step = bc.width / bc.points as f64;
    let lambdas: Vec<f64> = (-(bc.below as i64)..=bc.points as i64)
        .map(|k| lambda_c + step * k as f64)
        .collect();
    let data = trace_branch(nu, &r, &bc.eps, &lambdas)?;

    let record = |name: &str, r: Result<()>| match r {
        Ok(()) => CheckRecord::new(name, true, 0.0, 0.0, "ok"),
        Err(e) => CheckRecord::new(name, false, 1.0, 0.0, e.to_string()),
    };
    out.checks
        .push(record("branch_monotone", data.check_monotone(1e-10)));
    out.checks
        .push(record("branch_eps_ordering", data.check_eps_ordering(1e-8)));
    for (i, eps) in data.eps_values().into_iter().enumerate() {
        let v = data.vanishing_point(i).unwrap_or(f64::INFINITY);
        out.checks.push(CheckRecord::at_most(
            format!("vanishing_eps={eps}"),
            (v - lambda_c).abs(),
            2.0 * step,
            format!("branch leaves zero near {v:.6} vs lambda_c = {lambda_c:.6}"),
        ));
    }

    let mut w = out.file(dir, "branch.csv")?;
    data.write_csv(&mut w)?;
    w.flush()?;
    let series: Vec<Series> = data
        .branches
        .iter()
        .map(|b| Series {
            label: format!("eps = {}", b[0].eps),
            points: b.iter().map(|p| (p.lambda, p.sup_norm)).collect(),
        })
        .collect();
    let svg = line_chart("positive branch", "lambda", "sup norm", &series);
    let mut w = out.file(dir, "branch.svg")?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;

    if !bc.matched_eps.is_empty() {
        let pair = principal_eigenpair(nu, &ScalarField::zeros(grid), &r.map(|ri| lambda_c * ri - 1.0))?;
        let phi = pair.phi.scaled(bc.target_norm / pair.phi.sup_norm());
        let mut w = out.file(dir, "matched.csv")?;
        writeln!(w, "eps,lambda,distance")?;
        let mut distances = Vec::new();
        for &eps in &bc.matched_eps {
            let lambda = norm_matched_lambda(nu, &r, eps, bc.target_norm)?;
            let rep = solve_positive_with(&branch_problem(nu, &r, eps, lambda), &SolverOptions::default())?;
            let d = rep.u.distance(&phi);
            writeln!(w, "{eps},{lambda:.12e},{d:.16e}")?;
            distances.push((eps, d));
        }
        w.flush()?;
        let mut sorted = distances.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let decreasing = sorted.windows(2).all(|w| w[1].1 < w[0].1);
        out.checks.push(CheckRecord::new(
            "matched_distance_decreasing",
            decreasing,
            sorted.last().map_or(f64::NAN, |d| d.1),
            0.0,
            format!("{sorted:?}"),
        ));
    }
    out.report(dir, "branch.jsonl")
}

fn run_verify_all(cfg: &RunConfig, dir: &Path, out: &mut Outcome) -> Result<()> {
    let b = build(cfg)?;
    let p = &b.problem;
    let pair = principal_eigenpair(p.nu, &p.b, &p.a)?;
    let verdict = GateVerdict::classify(pair.lambda1, p.a.min());
    out.checks.push(CheckRecord::new(
        "gate",
        pair.residual <= 1e-8 * (1.0 + pair.lambda1.abs()),
        pair.lambda1,
        GATE_TOL,
        verdict.regime.to_string(),
    ));
    let rep = solve_positive_with(p, &solver_options(cfg))?;
    solve_checks(cfg, p, &rep, out);
    out.field(dir, "solution.csv", &rep.u)?;
    parabolic_check(cfg, p, &rep.u, dir, out)?;
    if verdict.passes() {
        value_checks(cfg, p, dir, out)?;
    }
    out.report(dir, "verify.jsonl")
}
