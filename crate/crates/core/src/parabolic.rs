//! Implicit Euler for the evolution problem
//!
//! ```text
//! u_t - nu u'' + eps (u')^2 - b u' = a u + f,   Neumann ends,
//! ```
//!
//! used as an independent route to the stationary solution.

use serde::Serialize;

use crate::elliptic::{residual, solve_positive, solve_semilinear, EllipticProblem, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::ScalarField;

/// Maximum number of times a failing step is split in half.
pub const MAX_HALVINGS: usize = 10;

/// One implicit Euler step of length `dt`:
/// `(w - u)/dt - nu w'' + eps (w')^2 - b w' - a w - f = 0`.
///
/// If the Newton solve fails, or `1/dt` does not dominate `max a`, the step is
/// replaced by two half steps, recursively up to [`MAX_HALVINGS`] levels.
pub fn step_implicit(p: &EllipticProblem, u: &ScalarField, dt: f64) -> Result<ScalarField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    p.validate()?;
    if u.grid() != p.grid() {
        return Err(Error::InvalidField("state lives on another grid".into()));
    }
    advance(p, u, dt, 0, &SolverOptions::default())
}

fn single_step(p: &EllipticProblem, u: &ScalarField, dt: f64, opts: &SolverOptions) -> Option<ScalarField> {
    let inv = 1.0 / dt;
    if !(inv > p.a.max()) {
        return None;
    }
    let c = p.a.values().iter().map(|ai| inv - ai).collect();
    let rhs = u.zip_map(&p.f, |ui, fi| inv * ui + fi);
    solve_semilinear(p, c, &rhs, u, opts).ok()
}

fn advance(
    p: &EllipticProblem,
    u: &ScalarField,
    dt: f64,
    depth: usize,
    opts: &SolverOptions,
) -> Result<ScalarField> {
    if let Some(w) = single_step(p, u, dt, opts) {
        return Ok(w);
    }
    if depth == MAX_HALVINGS {
        return Err(Error::StepFailure {
            halvings: MAX_HALVINGS,
            dt,
        });
    }
    let half = advance(p, u, 0.5 * dt, depth + 1, opts)?;
    advance(p, &half, 0.5 * dt, depth + 1, opts)
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_max: f64,
    /// Stop once `||u^{k+1} - u^k|| / dt` falls below this.
    pub tol: f64,
    /// Record a sample every this many steps (the final state is always
    /// recorded).
    pub sample_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_max: 200.0,
            tol: 1e-8,
            sample_every: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionReport {
    #[serde(skip)]
    pub u_final: ScalarField,
    pub times: Vec<f64>,
    /// Sup-norm distance to the stationary reference at each sample time.
    /// Empty when no reference could be computed.
    pub gaps: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub converged: bool,
    pub dt: f64,
    pub steps: usize,
    /// Residual of the stationary equation at the final state.
    pub final_residual: f64,
}

impl EvolutionReport {
    pub fn final_gap(&self) -> Option<f64> {
        self.gaps.last().copied()
    }

    /// `t,gap,sup_norm` rows; `gap` is left empty without a reference.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,gap,sup_norm")?;
        for (i, (t, s)) in self.times.iter().zip(&self.sup_norms).enumerate() {
            match self.gaps.get(i) {
                Some(g) => writeln!(w, "{t:.10e},{g:.16e},{s:.16e}")?,
                None => writeln!(w, "{t:.10e},,{s:.16e}")?,
            }
        }
        Ok(())
    }
}

/// Evolves from `u0` until the discrete time derivative drops below `tol`
/// or `t_max` is reached. Gaps are measured against the output of
/// [`solve_positive`] (zero in the zero-only regime).
pub fn evolve_to_steady(
    p: &EllipticProblem,
    u0: &ScalarField,
    opts: &EvolveOptions,
) -> Result<EvolutionReport> {
    let reference = solve_positive(p).ok().map(|r| r.u);
    evolve_with_reference(p, u0, opts, reference.as_ref())
}

/// As [`evolve_to_steady`] with a caller-supplied reference (or none).
pub fn evolve_with_reference(
    p: &EllipticProblem,
    u0: &ScalarField,
    opts: &EvolveOptions,
    reference: Option<&ScalarField>,
) -> Result<EvolutionReport> {
    p.validate()?;
    if !(opts.dt > 0.0) || !(opts.t_max >= 0.0) || !(opts.tol > 0.0) || opts.sample_every == 0 {
        return Err(Error::InvalidParameter(format!("bad evolution options {opts:?}")));
    }
    if u0.grid() != p.grid() {
        return Err(Error::InvalidField("initial state lives on another grid".into()));
    }
    if u0.min() < 0.0 {
        return Err(Error::InvalidField(format!(
            "initial state must be nonnegative, min is {}",
            u0.min()
        )));
    }
    if let Some(r) = reference {
        if r.grid() != p.grid() {
            return Err(Error::InvalidField("reference lives on another grid".into()));
        }
    }
    let sopts = SolverOptions::default();
    let mut rep = EvolutionReport {
        u_final: u0.clone(),
        times: Vec::new(),
        gaps: Vec::new(),
        sup_norms: Vec::new(),
        converged: false,
        dt: opts.dt,
        steps: 0,
        final_residual: f64::NAN,
    };
    let record = |rep: &mut EvolutionReport, t: f64, u: &ScalarField| {
        rep.times.push(t);
        rep.sup_norms.push(u.sup_norm());
        if let Some(r) = reference {
            rep.gaps.push(u.distance(r));
        }
    };

    let mut u = u0.clone();
    let mut t = 0.0;
    record(&mut rep, t, &u);
    let max_steps = (opts.t_max / opts.dt).round() as usize;
    let mut k = 0;
    while k < max_steps {
        let next = advance(p, &u, opts.dt, 0, &sopts)?;
        let rate = next.distance(&u) / opts.dt;
        u = next;
        k += 1;
        t = k as f64 * opts.dt;
        if rate <= opts.tol {
            rep.converged = true;
            break;
        }
        if k % opts.sample_every == 0 {
            record(&mut rep, t, &u);
        }
    }
    if rep.times.last() != Some(&t) {
        record(&mut rep, t, &u);
    }
    rep.steps = k;
    rep.final_residual = residual(p, &u);
    rep.u_final = u;
    Ok(rep)
}
