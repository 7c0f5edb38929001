//! Monte Carlo for the control representation.
//!
//! The state follows the reflected diffusion `dX = (b + alpha) dt + sqrt(2 nu) dW`
//! on `[0, 1]`, discretized by Euler–Maruyama and folded back into the
//! interval. With the substitution `w = 2 eps u` a solution `u` of the
//! general problem turns into a solution of
//!
//! ```text
//! -nu w'' + (w')^2 / 2 - b w' = a w + 2 eps f,
//! ```
//!
//! whose feedback control is `alpha = -w'` and whose running cost is
//! `|alpha|^2 / 2 + 2 eps f`, discounted by `exp(int a(X) dt)`.
//!
//! Every path draws its normals from its own ChaCha stream
//! (`seed = master_seed`, `stream = path_index`), so estimates do not depend
//! on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::elliptic::EllipticProblem;
use crate::error::{Error, Result};
use crate::grid::{centered_derivative, ScalarField};

/// Weights above this abort the estimate.
pub const EXPLODING_WEIGHT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub master_seed: u64,
    pub x0: f64,
    /// Paths stop once their discount weight falls below this.
    pub weight_floor: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            dt: 1e-3,
            horizon: 50.0,
            master_seed: 42,
            x0: 0.5,
            weight_floor: 1e-12,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidParameter("paths must be >= 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(Error::InvalidParameter(format!(
                "x0 must lie in [0, 1], got {}",
                self.x0
            )));
        }
        if !(self.weight_floor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight_floor must be >= 0, got {}",
                self.weight_floor
            )));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths_used: usize,
    /// Average weight still carried by paths when they were cut.
    pub truncation_mass: f64,
}

/// Reflects `x` into `[0, 1]` (`x < 0 -> -x`, `x > 1 -> 2 - x`, repeated).
pub fn fold(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        return x;
    }
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

fn path_rng(master_seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

/// States `X_0, ..., X_N` of one path with `N = round(horizon / dt)`.
/// `nu = 0` is allowed and gives the deterministic folded flow.
pub fn simulate_reflected_path(
    nu: f64,
    drift: &ScalarField,
    x0: f64,
    cfg: &McConfig,
    path_index: u64,
) -> Result<Vec<f64>> {
    let cfg = McConfig { x0, ..*cfg };
    cfg.validate()?;
    if !(nu >= 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be >= 0, got {nu}")));
    }
    let drift = CellTable::new([drift]);
    let sigma = (2.0 * nu * cfg.dt).sqrt();
    let mut rng = path_rng(cfg.master_seed, path_index);
    let mut x = x0;
    let mut out = Vec::with_capacity(cfg.steps() + 1);
    out.push(x);
    for _ in 0..cfg.steps() {
        let xi: f64 = StandardNormal.sample(&mut rng);
        x = fold(x + drift.at(x)[0] * cfg.dt + sigma * xi);
        out.push(x);
    }
    Ok(out)
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
struct Sum {
    s: f64,
    c: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.s + v;
        if self.s.abs() >= v.abs() {
            self.c += (self.s - t) + v;
        } else {
            self.c += (v - t) + self.s;
        }
        self.s = t;
    }

    fn value(&self) -> f64 {
        self.s + self.c
    }
}

fn mean_and_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mut s = Sum::default();
    samples.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let mut q = Sum::default();
    samples.iter().for_each(|&v| q.add((v - mean) * (v - mean)));
    (mean, (q.value() / (n - 1.0) / n).sqrt())
}

/// `(exp(z) - 1) / z`, continuous at zero.
#[inline]
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// `(exp(z), (exp(z) - 1) / z)` by Taylor series, accurate to rounding for
/// `|z| <= 0.01`.
#[inline]
fn discount_series(z: f64) -> (f64, f64) {
    let avg = 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0))));
    (1.0 + z * avg, avg)
}

/// Several nodal fields packed per cell as `(value, increment)` pairs so one
/// index computation serves all lookups.
struct CellTable<const K: usize> {
    cells: Vec<[(f64, f64); K]>,
    inv_h: f64,
}

impl<const K: usize> CellTable<K> {
    fn new(fields: [&ScalarField; K]) -> Self {
        let n = fields[0].len();
        let cells = (0..n - 1)
            .map(|i| {
                std::array::from_fn(|j| {
                    let v = fields[j].values();
                    (v[i], v[i + 1] - v[i])
                })
            })
            .collect();
        Self {
            cells,
            inv_h: 1.0 / fields[0].grid().h(),
        }
    }

    #[inline]
    fn at(&self, x: f64) -> [f64; K] {
        let s = x * self.inv_h;
        let i = (s as usize).min(self.cells.len() - 1);
        let t = s - i as f64;
        let c = &self.cells[i];
        std::array::from_fn(|j| c[j].0 + t * c[j].1)
    }
}

struct PathCost {
    cost: f64,
    cut_weight: f64,
}

/// Discounted cost of the state-feedback control `alpha` (in the
/// normalized `|alpha|^2 / 2` units) for the problem `p`, returned in the
/// units of `p`'s solution (divided by `2 eps`).
///
/// Over each step the integrand and `a` are frozen at the left state and
/// the discount is integrated exactly.
pub fn estimate_feedback_cost(
    p: &EllipticProblem,
    alpha: &ScalarField,
    x0: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    let cfg = McConfig { x0, ..*cfg };
    cfg.validate()?;
    p.validate()?;
    if alpha.grid() != p.grid() {
        return Err(Error::InvalidField("control lives on another grid".into()));
    }
    let two_eps = 2.0 * p.eps;
    let drift = p.b.zip_map(alpha, |b, a| b + a);
    let running = alpha.zip_map(&p.f, |a, f| 0.5 * a * a + two_eps * f);
    let table = CellTable::new([&drift, &running, &p.a]);
    let sigma = (2.0 * p.nu * cfg.dt).sqrt();
    let steps = cfg.steps();
    let dt = cfg.dt;
    let small_steps = p.a.sup_norm() * dt <= 0.01;

    let per_path = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = path_rng(cfg.master_seed, index);
            let mut x = cfg.x0;
            let mut weight = 1.0_f64;
            let mut cost = 0.0_f64;
            for k in 0..steps {
                if weight < cfg.weight_floor {
                    break;
                }
                if weight > EXPLODING_WEIGHT {
                    return Err(Error::ExplodingWeight {
                        weight,
                        time: k as f64 * dt,
                    });
                }
                let [bx, rx, ax] = table.at(x);
                let z = ax * dt;
                let (growth, avg) = if small_steps {
                    discount_series(z)
                } else {
                    (z.exp(), phi1(z))
                };
                cost += weight * rx * dt * avg;
                weight *= growth;
                let xi: f64 = StandardNormal.sample(&mut rng);
                x = fold(x + bx * dt + sigma * xi);
            }
            Ok(PathCost {
                cost: cost / two_eps,
                cut_weight: weight.min(1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let costs: Vec<f64> = per_path.iter().map(|c| c.cost).collect();
    let cuts: Vec<f64> = per_path.iter().map(|c| c.cut_weight).collect();
    let (mean, std_error) = mean_and_error(&costs);
    Ok(McEstimate {
        mean,
        std_error,
        paths_used: cfg.paths,
        truncation_mass: mean_and_error(&cuts).0.clamp(0.0, 1.0),
    })
}

/// The problem for `w = 2 eps u` (quadratic coefficient 1/2, source
/// `2 eps f`) with the constant `delta` added to the source. Its solution is
/// the value of the control problem with running cost
/// `|alpha|^2 / 2 + 2 eps f + delta`.
pub fn perturbed_control_problem(p: &EllipticProblem, delta: f64) -> EllipticProblem {
    let f = p.f.map(|fi| 2.0 * p.eps * fi + delta);
    p.clone().with_eps(0.5).with_source(f)
}

/// Cost of the feedback `alpha = -(2 eps u)'` built from the solution `u`.
/// For `u` solving `p` this estimates `u(x0)` itself.
pub fn estimate_value(
    p: &EllipticProblem,
    u_eps: &ScalarField,
    x0: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if u_eps.grid() != p.grid() {
        return Err(Error::InvalidField("value field lives on another grid".into()));
    }
    let alpha = centered_derivative(u_eps).scaled(-2.0 * p.eps);
    estimate_feedback_cost(p, &alpha, x0, cfg)
}

/// Exponential rate of `E[exp(int_0^T a(Y) dt)]` for the uncontrolled
/// reflected diffusion with drift `b`, from the ratio of the horizons
/// `T/2` and `T`. Its expectation is `-lambda1(-nu D^2 - b D - a)` for
/// large `T`. The standard error comes from the delta method.
pub fn estimate_growth_rate(nu: f64, b: &ScalarField, a: &ScalarField, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate()?;
    if !(nu >= 0.0) {
        return Err(Error::InvalidParameter(format!("nu must be >= 0, got {nu}")));
    }
    if b.grid() != a.grid() {
        return Err(Error::InvalidField(
            "drift and potential live on different grids".into(),
        ));
    }
    let steps = cfg.steps().max(2);
    let half = steps / 2;
    let table = CellTable::new([b, a]);
    let sigma = (2.0 * nu * cfg.dt).sqrt();

    let logs: Vec<(f64, f64)> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = path_rng(cfg.master_seed, index);
            let mut x = cfg.x0;
            let mut logw = Sum::default();
            let mut at_half = 0.0;
            for k in 0..steps {
                if k == half {
                    at_half = logw.value();
                }
                let [bx, ax] = table.at(x);
                logw.add(ax * cfg.dt);
                let xi: f64 = StandardNormal.sample(&mut rng);
                x = fold(x + bx * cfg.dt + sigma * xi);
            }
            (at_half, logw.value())
        })
        .collect();

    let m_half = logs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    let m_full = logs.iter().map(|l| l.1).fold(f64::NEG_INFINITY, f64::max);
    let z: Vec<f64> = logs.iter().map(|l| (l.0 - m_half).exp()).collect();
    let y: Vec<f64> = logs.iter().map(|l| (l.1 - m_full).exp()).collect();
    let (zbar, _) = mean_and_error(&z);
    let (ybar, _) = mean_and_error(&y);
    let span = (steps - half) as f64 * cfg.dt;
    let rate = ((ybar.ln() + m_full) - (zbar.ln() + m_half)) / span;

    let n = cfg.paths as f64;
    let std_error = if cfg.paths < 2 {
        0.0
    } else {
        // variance of ln(ybar) - ln(zbar) to first order
        let mut s = Sum::default();
        for (yi, zi) in y.iter().zip(&z) {
            let d = yi / ybar - zi / zbar;
            s.add(d * d);
        }
        (s.value() / (n - 1.0) / n).sqrt() / span
    };
    Ok(McEstimate {
        mean: rate,
        std_error,
        paths_used: cfg.paths,
        truncation_mass: 0.0,
    })
}

impl McEstimate {
    /// `x0,mean,std_error,paths,truncation_mass` row.
    pub fn csv_row(&self, x0: f64) -> String {
        format!(
            "{x0},{:.16e},{:.16e},{},{:.16e}",
            self.mean, self.std_error, self.paths_used, self.truncation_mass
        )
    }
}

pub const MC_CSV_HEADER: &str = "x0,mean,std_error,paths,truncation_mass";
