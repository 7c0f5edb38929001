//! Principal eigenpair of `L = -nu d2/dx2 - b d/dx - a` with Neumann
//! conditions, the existence gate built on its sign, and the critical
//! coupling of the parametrized problem `a = lambda r - 1`.
//!
//! The operator is discretized with the same stencils as the solvers, so the
//! gate and the solver agree at the discrete level. For `|b| h <= 2 nu` the
//! matrix is an irreducible Z-matrix: its smallest eigenvalue is real and
//! simple and owns a strictly positive eigenvector.
//!
//! The eigenpair is found by shifted inverse iteration. The first sweep uses
//! the shift `4 nu / h^2 + sup|a| + sup|b| / h`, which makes `L + shift` a
//! diagonally dominant M-matrix. Every later sweep shifts to just below the
//! Collatz-Wielandt lower bound `min_i (L v)_i / v_i <= lambda1`, which keeps
//! the shifted matrix an M-matrix (so the resolvent maps positive vectors to
//! positive vectors) while the bracket `[min, max]` of the ratios collapses
//! onto `lambda1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::Tridiagonal;

/// Width of the band around zero in which the gate refuses to call the
/// problem `UniquePositive`.
pub const GATE_TOL: f64 = 1e-9;

/// Bracket width accepted once the iteration has stopped making progress.
const STALL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Stop once the Collatz-Wielandt bracket is narrower than
    /// `tol * (1 + |lambda1|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 200,
        }
    }
}

/// Principal eigenvalue and its positive eigenfunction (sup-normalized).
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    pub phi: ScalarField,
    /// `||L phi - lambda1 phi||_inf`.
    pub residual: f64,
    /// Certified enclosure `lower <= lambda1 <= upper` from the final iterate.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `lambda1 < -GATE_TOL` and `min a < 0`: a unique positive solution exists.
    UniquePositive,
    /// `lambda1 >= -GATE_TOL` with `min a < 0`: zero is the only solution.
    ZeroOnly,
    /// `min a >= 0`: no positive solution unless `a` vanishes identically.
    DegenerateNonnegativeA,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::UniquePositive => "UniquePositive",
            Regime::ZeroOnly => "ZeroOnly",
            Regime::DegenerateNonnegativeA => "DegenerateNonnegativeA",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateVerdict {
    pub regime: Regime,
    pub lambda1: f64,
    pub min_a: f64,
}

impl GateVerdict {
    pub fn classify(lambda1: f64, min_a: f64) -> Self {
        let regime = if min_a >= 0.0 {
            Regime::DegenerateNonnegativeA
        } else if lambda1 < -GATE_TOL {
            Regime::UniquePositive
        } else {
            Regime::ZeroOnly
        };
        Self {
            regime,
            lambda1,
            min_a,
        }
    }

    pub fn passes(&self) -> bool {
        self.regime == Regime::UniquePositive
    }
}

fn check_inputs(nu: f64, b: &ScalarField, a: &ScalarField) -> Result<()> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("nu must be > 0, got {nu}")));
    }
    if b.grid() != a.grid() {
        return Err(Error::InvalidField(
            "drift and potential live on different grids".into(),
        ));
    }
    let h = a.grid().h();
    if let Some(i) = b.values().iter().position(|bi| bi.abs() * h > 2.0 * nu) {
        return Err(Error::InvalidParameter(format!(
            "drift {} at node {i} exceeds the cell Peclet limit 2 nu / h = {}",
            b.values()[i],
            2.0 * nu / h
        )));
    }
    Ok(())
}

/// Assembles the discrete `-nu d2/dx2 - b d/dx - a`.
pub fn operator_matrix(nu: f64, b: &ScalarField, a: &ScalarField) -> Tridiagonal {
    let grid = a.grid();
    let n = grid.n();
    let h = grid.h();
    let k = nu / (h * h);
    let mut m = Tridiagonal::zeros(n);
    m.diag[0] = 2.0 * k - a.values()[0];
    m.upper[0] = -2.0 * k;
    for i in 1..n - 1 {
        let bi = b.values()[i] / (2.0 * h);
        m.lower[i] = -k + bi;
        m.diag[i] = 2.0 * k - a.values()[i];
        m.upper[i] = -k - bi;
    }
    m.lower[n - 1] = -2.0 * k;
    m.diag[n - 1] = 2.0 * k - a.values()[n - 1];
    m
}

/// `L v` evaluated with differences formed first, which keeps the rounding
/// error proportional to the local variation of `v` instead of its size.
fn apply_operator(nu: f64, b: &[f64], a: &[f64], h: f64, v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let k = nu / (h * h);
    out[0] = -2.0 * k * (v[1] - v[0]) - a[0] * v[0];
    for i in 1..n - 1 {
        let second = (v[i + 1] - v[i]) - (v[i] - v[i - 1]);
        let first = (v[i + 1] - v[i - 1]) / (2.0 * h);
        out[i] = -k * second - b[i] * first - a[i] * v[i];
    }
    out[n - 1] = -2.0 * k * (v[n - 2] - v[n - 1]) - a[n - 1] * v[n - 1];
}

fn collatz_bounds(lv: &[f64], v: &[f64]) -> (f64, f64) {
    lv.iter()
        .zip(v)
        .map(|(l, x)| l / x)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(q), hi.max(q))
        })
}

/// Principal eigenpair with default options.
pub fn principal_eigenpair(nu: f64, b: &ScalarField, a: &ScalarField) -> Result<EigenPair> {
    principal_eigenpair_with(nu, b, a, EigenOptions::default())
}

pub fn principal_eigenpair_with(
    nu: f64,
    b: &ScalarField,
    a: &ScalarField,
    opts: EigenOptions,
) -> Result<EigenPair> {
    check_inputs(nu, b, a)?;
    let grid = a.grid();
    let n = grid.n();
    let h = grid.h();
    let (bv, av) = (b.values(), a.values());
    let base = operator_matrix(nu, b, a);

    let mut v = vec![1.0; n];
    let mut lv = vec![0.0; n];
    let mut shift = -(4.0 * nu / (h * h) + a.sup_norm() + b.sup_norm() / h);
    let mut bounds = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best = f64::INFINITY;
    let mut stalled = 0;

    for iter in 0..=opts.max_iter {
        apply_operator(nu, bv, av, h, &v, &mut lv);
        bounds = collatz_bounds(&lv, &v);
        let (lo, hi) = bounds;
        let mid = 0.5 * (lo + hi);
        // Where phi is tiny the quotients carry rounding of order
        // eps nu / h^2 relative to phi, so on fine grids the bracket can
        // stop shrinking above `tol`. Accept a stalled bracket once it is
        // within STALL_TOL.
        if hi - lo < 0.5 * best {
            stalled = 0;
        } else {
            stalled += 1;
        }
        best = best.min(hi - lo);
        let stalled_ok = stalled >= 3 && hi - lo <= STALL_TOL * (1.0 + mid.abs());
        if hi - lo <= opts.tol * (1.0 + mid.abs()) || stalled_ok {
            let residual = lv
                .iter()
                .zip(&v)
                .fold(0.0_f64, |m, (l, x)| m.max((l - mid * x).abs()));
            return Ok(EigenPair {
                lambda1: mid,
                phi: ScalarField::new(grid, v)?,
                residual,
                bracket: bounds,
                iterations: iter,
            });
        }
        if iter > 0 {
            shift = lo - (hi - lo).max(1e-13 * (1.0 + lo.abs()));
        }
        let mut m = base.clone();
        m.shift_diagonal(-shift);
        let y = m.solve(&v)?;
        let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(ymax > 0.0) || y.iter().any(|&yi| !(yi > 0.0)) {
            return Err(Error::IterationFailure {
                what: "principal eigenpair (lost positivity)",
                iterations: iter,
                residual: hi - lo,
            });
        }
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = yi / ymax);
    }
    Err(Error::IterationFailure {
        what: "principal eigenpair",
        iterations: opts.max_iter,
        residual: bounds.1 - bounds.0,
    })
}

/// Existence gate on the drift-free operator `-nu d2/dx2 - a`.
pub fn existence_gate(nu: f64, a: &ScalarField) -> Result<GateVerdict> {
    let b = ScalarField::zeros(a.grid());
    existence_gate_with_drift(nu, &b, a)
}

/// Existence gate on `-nu d2/dx2 - b d/dx - a`.
pub fn existence_gate_with_drift(nu: f64, b: &ScalarField, a: &ScalarField) -> Result<GateVerdict> {
    let pair = principal_eigenpair(nu, b, a)?;
    Ok(GateVerdict::classify(pair.lambda1, a.min()))
}

/// `lambda -> lambda1(-nu d2/dx2 - lambda r + 1)`.
pub fn coupled_eigenvalue(nu: f64, r: &ScalarField, lambda: f64) -> Result<f64> {
    let a = r.map(|ri| lambda * ri - 1.0);
    let b = ScalarField::zeros(r.grid());
    Ok(principal_eigenpair(nu, &b, &a)?.lambda1)
}

/// `lambda1(-nu d2/dx2 - (r - 1))`, the scale normalization of the coupled
/// problem. Reported only; nothing downstream requires it to be `-1`.
pub fn coupled_normalization(nu: f64, r: &ScalarField) -> Result<f64> {
    coupled_eigenvalue(nu, r, 1.0)
}

const LAMBDA_C_TOL: f64 = 1e-10;

/// Root of `lambda -> lambda1(-nu d2/dx2 - lambda r + 1)` on `bracket` by
/// bisection. The map is nonincreasing for `r >= 0`.
pub fn critical_lambda(nu: f64, r: &ScalarField, bracket: (f64, f64)) -> Result<f64> {
    if r.min() < 0.0 {
        return Err(Error::InvalidField(format!(
            "coupling profile must be nonnegative, min is {}",
            r.min()
        )));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty bracket [{lo}, {hi}]")));
    }
    let f_lo = coupled_eigenvalue(nu, r, lo)?;
    let f_hi = coupled_eigenvalue(nu, r, hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    let lo_positive = f_lo > 0.0;
    while hi - lo > LAMBDA_C_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = coupled_eigenvalue(nu, r, mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if (f_mid > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Finds a bracket `[0, hi]` by doubling and returns the critical coupling.
pub fn critical_lambda_auto(nu: f64, r: &ScalarField) -> Result<f64> {
    if !(r.max() > 0.0) {
        return Err(Error::InvalidField(
            "coupling profile vanishes identically".into(),
        ));
    }
    let mut hi = 1.0;
    while coupled_eigenvalue(nu, r, hi)? >= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Bracket {
                lo: 0.0,
                hi,
                f_lo: 1.0,
                f_hi: coupled_eigenvalue(nu, r, hi)?,
            });
        }
    }
    critical_lambda(nu, r, (0.0, hi))
}
