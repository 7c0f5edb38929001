//! Market models that lead to the stationary equation.
//!
//! * Crypto (CARA agents): `-nu u'' + eps (u')^2 = (r1 - r0) u` with
//!   `eps = 2 c K nu / N`.
//! * Real estate (CRRA agents, fixed wealth `Q`, rent `f`):
//!   `-nu u'' + eps (u')^2 = (r1 - r0) u + f` with `eps = gamma K (2 nu) / Q`.
//!
//! The state volatility enters only through `sigma^2 = 2 nu`.

use serde::Serialize;

use crate::elliptic::{solve_positive, EllipticProblem, SolveReport};
use crate::error::{Error, Result};
use crate::grid::{centered_derivative, neumann_laplacian, ScalarField};
use crate::spectral::{principal_eigenpair, GateVerdict, Regime};

#[derive(Debug, Clone)]
pub struct CryptoScenario {
    pub nu: f64,
    /// CARA coefficient.
    pub c: f64,
    pub k_asset: f64,
    pub n_agents: f64,
    /// Constant return of the asset.
    pub r1: f64,
    /// Return of the numeraire, nonincreasing in the state.
    pub r0: ScalarField,
}

#[derive(Debug, Clone)]
pub struct RealEstateScenario {
    pub nu: f64,
    /// CRRA risk parameter.
    pub gamma: f64,
    pub k_asset: f64,
    /// Total wealth available for the asset.
    pub q_wealth: f64,
    pub r1: f64,
    pub r0: ScalarField,
    /// Rent, nonnegative.
    pub f: ScalarField,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    Crypto(CryptoScenario),
    RealEstate(RealEstateScenario),
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Scenario {
            field,
            message: format!("must be > 0, got {v}"),
        })
    }
}

fn finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Scenario {
            field,
            message: format!("must be finite, got {v}"),
        })
    }
}

impl CryptoScenario {
    pub fn eps(&self) -> f64 {
        2.0 * self.c * self.k_asset * self.nu / self.n_agents
    }

    pub fn validate(&self) -> Result<()> {
        positive("nu", self.nu)?;
        positive("c", self.c)?;
        positive("K", self.k_asset)?;
        positive("N", self.n_agents)?;
        finite("r1", self.r1)?;
        if let Some(i) = self.r0.values().windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::Scenario {
                field: "r0",
                message: format!("must be nonincreasing, increases after node {i}"),
            });
        }
        Ok(())
    }
}

impl RealEstateScenario {
    pub fn eps(&self) -> f64 {
        self.gamma * self.k_asset * (2.0 * self.nu) / self.q_wealth
    }

    pub fn validate(&self) -> Result<()> {
        positive("nu", self.nu)?;
        positive("gamma", self.gamma)?;
        positive("K", self.k_asset)?;
        positive("Q", self.q_wealth)?;
        finite("r1", self.r1)?;
        if self.f.grid() != self.r0.grid() {
            return Err(Error::Scenario {
                field: "f",
                message: "rent and r0 live on different grids".into(),
            });
        }
        if self.f.min() < 0.0 {
            return Err(Error::Scenario {
                field: "f",
                message: format!("rent must be nonnegative, min is {}", self.f.min()),
            });
        }
        Ok(())
    }
}

impl Scenario {
    pub fn eps(&self) -> f64 {
        match self {
            Scenario::Crypto(s) => s.eps(),
            Scenario::RealEstate(s) => s.eps(),
        }
    }

    pub fn nu(&self) -> f64 {
        match self {
            Scenario::Crypto(s) => s.nu,
            Scenario::RealEstate(s) => s.nu,
        }
    }

    fn r0(&self) -> &ScalarField {
        match self {
            Scenario::Crypto(s) => &s.r0,
            Scenario::RealEstate(s) => &s.r0,
        }
    }

    fn r1(&self) -> f64 {
        match self {
            Scenario::Crypto(s) => s.r1,
            Scenario::RealEstate(s) => s.r1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Crypto(s) => s.validate(),
            Scenario::RealEstate(s) => s.validate(),
        }
    }

    /// Same scenario with `r0` raised by `s`.
    pub fn with_r0_shift(&self, s: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Scenario::Crypto(c) => c.r0 = c.r0.shifted(s),
            Scenario::RealEstate(r) => r.r0 = r.r0.shifted(s),
        }
        out
    }
}

/// `a = r1 - r0`, `b = 0`, the scenario's `eps` and source.
pub fn build_problem(scn: &Scenario) -> Result<EllipticProblem> {
    scn.validate()?;
    let r1 = scn.r1();
    let a = scn.r0().map(|r0| r1 - r0);
    let p = EllipticProblem::new(scn.nu(), scn.eps(), a);
    Ok(match scn {
        Scenario::Crypto(_) => p,
        Scenario::RealEstate(s) => p.with_source(s.f.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AllocationKind {
    /// CARA: `theta` per unit wealth (`q = 1`), demand `N D`.
    PerUnitWealth,
    /// CRRA: `theta` is a fraction of wealth, demand `Q theta / u`.
    FractionOfWealth,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationProfile {
    pub kind: AllocationKind,
    /// `None` where `u'` vanishes (both ends, and any interior extremum).
    pub theta: Vec<Option<f64>>,
    /// Aggregate demand in asset units; clears at `K`.
    pub demand: Vec<Option<f64>>,
    /// Largest `|demand - K|` over cell midpoints in `[0.1, 0.9]`.
    pub clearing_error: f64,
}

/// Fraction of the state interval, at each end, left out of the clearing
/// audit (`u'` tends to zero there and the demand quotient degenerates).
pub const CLEARING_MARGIN: f64 = 0.1;

struct Coefficients {
    /// `c sigma^2` (CARA) or `gamma sigma^2` (CRRA).
    risk: f64,
    /// Multiplier turning the demand quotient into aggregate quantity.
    scale: f64,
    k_asset: f64,
    kind: AllocationKind,
}

impl Scenario {
    fn coefficients(&self) -> Coefficients {
        let sigma_sq = 2.0 * self.nu();
        match self {
            Scenario::Crypto(s) => Coefficients {
                risk: s.c * sigma_sq,
                scale: s.n_agents,
                k_asset: s.k_asset,
                kind: AllocationKind::PerUnitWealth,
            },
            Scenario::RealEstate(s) => Coefficients {
                risk: s.gamma * sigma_sq,
                scale: s.q_wealth,
                k_asset: s.k_asset,
                kind: AllocationKind::FractionOfWealth,
            },
        }
    }
}

/// Optimal allocations and demand implied by a solved price `u`.
///
/// Nodal values use the solver's difference operators. The clearing audit
/// uses cell-midpoint values (`u` and `u''` averaged, `u'` the one-sided
/// difference), all second-order accurate, so its error reflects the
/// discretization rather than the solver residual.
pub fn allocation_profile(
    scn: &Scenario,
    u: &ScalarField,
    report: &SolveReport,
) -> Result<AllocationProfile> {
    if report.regime() != Regime::UniquePositive {
        return Err(Error::NoBubble(format!(
            "regime is {}, allocations are undefined at u = 0",
            report.regime()
        )));
    }
    let p = build_problem(scn)?;
    if u.grid() != p.grid() {
        return Err(Error::InvalidField("price lives on another grid".into()));
    }
    let co = scn.coefficients();
    let grid = u.grid();
    let n = grid.n();
    let h = grid.h();
    let (uv, av, bv, fv) = (u.values(), p.a.values(), p.b.values(), p.f.values());
    let du = centered_derivative(u);
    let lap = neumann_laplacian(u);
    let (dv, lv) = (du.values(), lap.values());
    let numerator = |u: f64, du: f64, lap: f64, a: f64, b: f64, f: f64| u * a + du * b + p.nu * lap + f;

    let cutoff = 1e-10 * (1.0 + u.sup_norm());
    let mut theta = vec![None; n];
    let mut demand = vec![None; n];
    for i in 1..n - 1 {
        if dv[i].abs() <= cutoff || uv[i] <= 0.0 {
            continue;
        }
        let q = numerator(uv[i], dv[i], lv[i], av[i], bv[i], fv[i]) / (co.risk * dv[i] * dv[i]);
        theta[i] = Some(uv[i] * q);
        demand[i] = Some(co.scale * q);
    }

    let mut clearing_error = 0.0_f64;
    for i in 0..n - 1 {
        let xm = grid.x(i) + 0.5 * h;
        if !(CLEARING_MARGIN..=1.0 - CLEARING_MARGIN).contains(&xm) {
            continue;
        }
        let mid = |v: &[f64]| 0.5 * (v[i] + v[i + 1]);
        let slope = (uv[i + 1] - uv[i]) / h;
        if slope.abs() <= cutoff {
            continue;
        }
        let num = numerator(mid(uv), slope, mid(lv), mid(av), mid(bv), mid(fv));
        let d = co.scale * num / (co.risk * slope * slope);
        clearing_error = clearing_error.max((d - co.k_asset).abs());
    }

    Ok(AllocationProfile {
        kind: co.kind,
        theta,
        demand,
        clearing_error,
    })
}

impl AllocationProfile {
    /// `x,u,theta_star,demand` rows with `undefined` at degenerate nodes.
    pub fn write_csv<W: std::io::Write>(&self, u: &ScalarField, mut w: W) -> Result<()> {
        let cell = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.16e}"));
        writeln!(w, "x,u,theta_star,demand")?;
        for (i, x) in u.grid().nodes().enumerate() {
            writeln!(
                w,
                "{x:.16e},{:.16e},{},{}",
                u.values()[i],
                cell(self.theta[i]),
                cell(self.demand[i])
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub shift: f64,
    pub lambda1: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdScan {
    pub rows: Vec<ScanRow>,
    /// Shift of `r0` at which `lambda1` changes sign, if bracketed.
    pub threshold: Option<f64>,
}

/// Principal eigenvalue of `-nu D^2 + (r0 + s - r1)` for every shift `s`,
/// plus the sign-change shift located by bisection to `1e-8`.
pub fn gate_threshold_scan(scn: &Scenario, shifts: &[f64]) -> Result<ThresholdScan> {
    let eval = |s: f64| -> Result<GateVerdict> {
        let p = build_problem(&scn.with_r0_shift(s))?;
        let pair = principal_eigenpair(p.nu, &p.b, &p.a)?;
        Ok(GateVerdict::classify(pair.lambda1, p.a.min()))
    };
    let mut sorted = shifts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rows = sorted
        .iter()
        .map(|&s| {
            eval(s).map(|v| ScanRow {
                shift: s,
                lambda1: v.lambda1,
                regime: v.regime,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut threshold = None;
    if let Some(w) = rows
        .windows(2)
        .find(|w| (w[0].lambda1 < 0.0) != (w[1].lambda1 < 0.0))
    {
        let (mut lo, mut hi) = (w[0].shift, w[1].shift);
        let lo_negative = w[0].lambda1 < 0.0;
        while hi - lo > 1e-8 {
            let mid = 0.5 * (lo + hi);
            if (eval(mid)?.lambda1 < 0.0) == lo_negative {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        threshold = Some(0.5 * (lo + hi));
    }
    Ok(ThresholdScan { rows, threshold })
}

/// Solves the scenario and returns the report together with its allocations.
pub fn solve_scenario(scn: &Scenario) -> Result<(SolveReport, Option<AllocationProfile>)> {
    let p = build_problem(scn)?;
    let rep = solve_positive(&p)?;
    let alloc = match rep.regime() {
        Regime::UniquePositive => Some(allocation_profile(scn, &rep.u, &rep)?),
        _ => None,
    };
    Ok((rep, alloc))
}
