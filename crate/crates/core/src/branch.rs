//! Positive branch of
//!
//! ```text
//! -nu u'' + eps (u')^2 + u = lambda r(x) u,   Neumann ends,
//! ```
//!
//! traced in `lambda` for several `eps`. The problem is the stationary
//! equation with `a = lambda r - 1`; the branch leaves zero at the critical
//! coupling `lambda_c` where `lambda1(-nu D^2 - lambda r + 1) = 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::{solve_from, solve_positive, EllipticProblem, Ordering, SolverOptions};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::spectral::{critical_lambda_auto, Regime};

/// Slack allowed between the spectral `lambda_c` and the solver's gate.
pub const GATE_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct BranchPoint {
    pub eps: f64,
    pub lambda: f64,
    pub sup_norm: f64,
    #[serde(skip)]
    pub u: ScalarField,
}

#[derive(Debug, Clone)]
pub struct BranchData {
    pub lambda_c: f64,
    pub nu: f64,
    pub r: ScalarField,
    /// One branch per `eps`, in the order given, each sorted by `lambda`.
    pub branches: Vec<Vec<BranchPoint>>,
}

/// Problem at coupling `lambda`.
pub fn branch_problem(nu: f64, r: &ScalarField, eps: f64, lambda: f64) -> EllipticProblem {
    EllipticProblem::new(nu, eps, r.map(|ri| lambda * ri - 1.0))
}

fn check_profile(r: &ScalarField) -> Result<()> {
    if r.min() < -1e-12 {
        return Err(Error::InvalidField(format!(
            "r must be nonnegative, min is {}",
            r.min()
        )));
    }
    if r.is_constant() {
        return Err(Error::InvalidField("r must be nonconstant".into()));
    }
    if r.values().iter().all(|v| v.abs() > 1e-12) {
        return Err(Error::InvalidField("r must vanish at some node".into()));
    }
    Ok(())
}

fn trace_one(nu: f64, r: &ScalarField, eps: f64, lambdas: &[f64], lambda_c: f64) -> Result<Vec<BranchPoint>> {
    let opts = SolverOptions::default();
    let mut previous: Option<ScalarField> = None;
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let p = branch_problem(nu, r, eps, lambda);
        let rep = match &previous {
            // the previous solution is a subsolution at larger lambda since r >= 0
            Some(u) if u.sup_norm() > 0.0 => {
                let rep = solve_from(&p, u, Ordering::Increasing, &opts)?;
                if rep.regime() == Regime::UniquePositive {
                    rep
                } else {
                    solve_positive(&p)?
                }
            }
            _ => solve_positive(&p)?,
        };
        let positive = rep.regime() == Regime::UniquePositive;
        if !positive && lambda > lambda_c + GATE_SLACK {
            return Err(Error::Branch(format!(
                "solver reports {} at lambda = {lambda} above lambda_c = {lambda_c}",
                rep.regime()
            )));
        }
        let u = if positive {
            rep.u
        } else {
            ScalarField::zeros(r.grid())
        };
        previous = Some(u.clone());
        points.push(BranchPoint {
            eps,
            lambda,
            sup_norm: u.sup_norm(),
            u,
        });
    }
    Ok(points)
}

/// Solves the branch problem on `lambda_grid` for every `eps`. Branches run
/// concurrently; along a branch each solve starts from the previous one.
pub fn trace_branch(nu: f64, r: &ScalarField, eps_list: &[f64], lambda_grid: &[f64]) -> Result<BranchData> {
    check_profile(r)?;
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {e}")));
    }
    if lambda_grid.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidParameter("lambda grid must be finite".into()));
    }
    let lambda_c = critical_lambda_auto(nu, r)?;
    let mut lambdas = lambda_grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let branches = eps_list
        .par_iter()
        .map(|&eps| trace_one(nu, r, eps, &lambdas, lambda_c))
        .collect::<Result<Vec<_>>>()?;
    Ok(BranchData {
        lambda_c,
        nu,
        r: r.clone(),
        branches,
    })
}

/// `n` equally spaced couplings in `(lambda_c, lambda_c + width]`.
pub fn lambda_grid_above(lambda_c: f64, width: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| lambda_c + width * k as f64 / n as f64).collect()
}

impl BranchData {
    pub fn eps_values(&self) -> Vec<f64> {
        self.branches
            .iter()
            .filter_map(|b| b.first().map(|p| p.eps))
            .collect()
    }

    /// Sup norm strictly increasing in `lambda` wherever it is positive.
    pub fn check_monotone(&self, slack: f64) -> Result<()> {
        for branch in &self.branches {
            for w in branch.windows(2) {
                let (lo, hi) = (&w[0], &w[1]);
                if hi.sup_norm == 0.0 {
                    if lo.sup_norm != 0.0 {
                        return Err(Error::Branch(format!(
                            "eps = {}: branch returns to zero at lambda = {}",
                            hi.eps, hi.lambda
                        )));
                    }
                    continue;
                }
                if hi.sup_norm <= lo.sup_norm + slack {
                    return Err(Error::Branch(format!(
                        "eps = {}: sup norm {} at lambda = {} does not exceed {} at {}",
                        hi.eps, hi.sup_norm, hi.lambda, lo.sup_norm, lo.lambda
                    )));
                }
            }
        }
        Ok(())
    }

    /// Smaller `eps` lies above at every node and every `lambda`.
    pub fn check_eps_ordering(&self, slack: f64) -> Result<()> {
        for (i, bi) in self.branches.iter().enumerate() {
            for bj in &self.branches[i + 1..] {
                for (pi, pj) in bi.iter().zip(bj) {
                    let (small, large) = if pi.eps < pj.eps { (pi, pj) } else { (pj, pi) };
                    let worst = small
                        .u
                        .values()
                        .iter()
                        .zip(large.u.values())
                        .fold(f64::INFINITY, |m, (s, l)| m.min(s - l));
                    if worst < -slack {
                        return Err(Error::Branch(format!(
                            "lambda = {}: eps = {} falls below eps = {} by {}",
                            pi.lambda, small.eps, large.eps, -worst
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Where the branch leaves zero, from a straight line through its first
    /// two positive points.
    pub fn vanishing_point(&self, branch: usize) -> Option<f64> {
        let b = &self.branches[branch];
        let k = b.iter().position(|p| p.sup_norm > 0.0)?;
        let (p, q) = (b.get(k)?, b.get(k + 1)?);
        let slope = (q.sup_norm - p.sup_norm) / (q.lambda - p.lambda);
        (slope > 0.0).then(|| p.lambda - p.sup_norm / slope)
    }

    /// `eps,lambda,sup_norm` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "eps,lambda,sup_norm")?;
        for p in self.branches.iter().flatten() {
            writeln!(w, "{},{:.12e},{:.16e}", p.eps, p.lambda, p.sup_norm)?;
        }
        Ok(())
    }
}

/// Coupling at which the branch for `eps` has sup norm `target_norm`, by
/// bisection on the increasing map `lambda -> ||u_lambda||`.
pub fn norm_matched_lambda(nu: f64, r: &ScalarField, eps: f64, target_norm: f64) -> Result<f64> {
    const NORM_TOL: f64 = 1e-8;
    check_profile(r)?;
    if !(target_norm > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "target norm must be > 0, got {target_norm}"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    let lambda_c = critical_lambda_auto(nu, r)?;
    let opts = SolverOptions::default();
    let solve = |lambda: f64, start: Option<&ScalarField>| -> Result<ScalarField> {
        let p = branch_problem(nu, r, eps, lambda);
        let rep = match start {
            Some(u) if u.sup_norm() > 0.0 => solve_from(&p, u, Ordering::Increasing, &opts)?,
            _ => solve_positive(&p)?,
        };
        Ok(if rep.regime() == Regime::UniquePositive {
            rep.u
        } else {
            ScalarField::zeros(r.grid())
        })
    };

    let mut lo = lambda_c;
    let mut u_lo = ScalarField::zeros(r.grid());
    let mut width = 1.0_f64.max(lambda_c.abs());
    let mut hi = lambda_c + width;
    let mut u_hi = solve(hi, None)?;
    let mut expansions = 0;
    while u_hi.sup_norm() < target_norm {
        if expansions == 30 {
            return Err(Error::Bracket {
                lo: lambda_c,
                hi,
                f_lo: -target_norm,
                f_hi: u_hi.sup_norm() - target_norm,
            });
        }
        lo = hi;
        u_lo = u_hi;
        width *= 2.0;
        hi = lambda_c + width;
        u_hi = solve(hi, Some(&u_lo))?;
        expansions += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let u = solve(mid, Some(&u_lo))?;
        let gap = u.sup_norm() - target_norm;
        if gap.abs() <= NORM_TOL {
            return Ok(mid);
        }
        if gap < 0.0 {
            lo = mid;
            u_lo = u;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use std::f64::consts::PI;

    fn profile(n: usize) -> ScalarField {
        ScalarField::from_fn(Grid1D::new(n).unwrap(), |x| 1.0 - (2.0 * PI * x).cos())
    }

    #[test]
    fn profile_checks() {
        let g = Grid1D::new(17).unwrap();
        assert!(check_profile(&ScalarField::constant(g, 0.0)).is_err());
        assert!(check_profile(&ScalarField::from_fn(g, |x| 1.0 + x)).is_err());
        assert!(check_profile(&ScalarField::from_fn(g, |x| x - 0.5)).is_err());
        assert!(check_profile(&ScalarField::from_fn(g, |x| x)).is_ok());
    }

    #[test]
    fn below_critical_is_zero_and_eps_scaling_halves() {
        let r = profile(129);
        let lc = critical_lambda_auto(0.1, &r).unwrap();
        let data = trace_branch(0.1, &r, &[1.0, 2.0], &[lc - 0.2, lc + 0.3, lc + 0.6]).unwrap();
        for b in &data.branches {
            assert_eq!(b[0].sup_norm, 0.0);
            assert!(b[1].sup_norm > 0.0);
        }
        for (p1, p2) in data.branches[0].iter().zip(&data.branches[1]) {
            let halved = p1.u.scaled(0.5);
            assert!(halved.distance(&p2.u) <= 1e-8 * (1.0 + p1.sup_norm));
        }
        data.check_monotone(1e-10).unwrap();
        data.check_eps_ordering(1e-8).unwrap();
    }

    #[test]
    fn norm_matching_round_trip_and_scaling() {
        let r = profile(129);
        let lc = critical_lambda_auto(0.1, &r).unwrap();
        let p = branch_problem(0.1, &r, 1.0, lc + 0.4);
        let target = solve_positive(&p).unwrap().u.sup_norm();
        let l = norm_matched_lambda(0.1, &r, 1.0, target).unwrap();
        assert!((l - (lc + 0.4)).abs() < 1e-6, "{l} vs {}", lc + 0.4);
        let l2 = norm_matched_lambda(0.1, &r, 2.0, 0.5 * target).unwrap();
        assert!((l2 - l).abs() < 1e-6);
    }

    #[test]
    fn csv_rows() {
        let r = profile(33);
        let lc = critical_lambda_auto(0.1, &r).unwrap();
        let data = trace_branch(0.1, &r, &[1.0], &lambda_grid_above(lc, 0.5, 3)).unwrap();
        let mut out = Vec::new();
        data.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("eps,lambda,sup_norm\n1,"));
    }
}
