//! `key = value` run configuration.
//!
//! ```text
//! command = verify-all          # optional, the command line wins
//! [problem]
//! model = crypto                # crypto | real_estate | generic
//! n = 1024
//! nu = 0.1
//! c = 1
//! K = 1
//! N = 2
//! r1 = -1
//! r0 = affine(5, -10)
//! [solver]
//! tol = 1e-10
//! [mc]
//! paths = 100000
//! seed = 42
//! [output]
//! dir = out
//! ```
//!
//! Sections are `[problem]`, `[solver]`, `[mc]`, `[branch]` and `[output]`.
//! Unknown keys, duplicated keys and out-of-range values are errors naming
//! the offending line.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::family::FieldSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Eigen,
    Evolve,
    Branch,
    VerifyControl,
    Scenario,
    VerifyAll,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Solve,
        Command::Eigen,
        Command::Evolve,
        Command::Branch,
        Command::VerifyControl,
        Command::Scenario,
        Command::VerifyAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Eigen => "eigen",
            Command::Evolve => "evolve",
            Command::Branch => "branch",
            Command::VerifyControl => "verify-control",
            Command::Scenario => "scenario",
            Command::VerifyAll => "verify-all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown command `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    /// Only `nu` and `n`; enough for `branch`.
    None,
    Generic {
        eps: f64,
        a: FieldSpec,
        b: FieldSpec,
        f: FieldSpec,
    },
    Crypto {
        c: f64,
        k_asset: f64,
        n_agents: f64,
        r1: f64,
        r0: FieldSpec,
    },
    RealEstate {
        gamma: f64,
        k_asset: f64,
        q_wealth: f64,
        r1: f64,
        r0: FieldSpec,
        rent: FieldSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub n: usize,
    pub nu: f64,
    pub model: ModelConfig,
}

impl ProblemConfig {
    /// Quadratic coefficient of the stationary equation.
    pub fn eps(&self) -> Option<f64> {
        match self.model {
            ModelConfig::None => None,
            ModelConfig::Generic { eps, .. } => Some(eps),
            ModelConfig::Crypto {
                c, k_asset, n_agents, ..
            } => Some(2.0 * c * k_asset * self.nu / n_agents),
            ModelConfig::RealEstate {
                gamma,
                k_asset,
                q_wealth,
                ..
            } => Some(gamma * k_asset * 2.0 * self.nu / q_wealth),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub dt: f64,
    pub t_max: f64,
    pub evolve_tol: f64,
    /// Constant initial state of `evolve`.
    pub u0: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_outer: 200_000,
            dt: 1e-2,
            t_max: 200.0,
            evolve_tol: 1e-8,
            u0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub paths: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub weight_floor: f64,
    pub x0: Vec<f64>,
    /// Constant source added for the value check.
    pub perturbation: f64,
    pub growth_paths: usize,
    pub growth_dt: f64,
    pub growth_horizon: f64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 42,
            dt: 1e-3,
            horizon: 50.0,
            weight_floor: 1e-12,
            x0: vec![0.25, 0.5, 0.75],
            perturbation: 1e-3,
            growth_paths: 100_000,
            growth_dt: 1e-2,
            growth_horizon: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchConfig {
    pub r: FieldSpec,
    pub eps: Vec<f64>,
    /// Couplings above the critical one, spread over `width`.
    pub points: usize,
    pub width: f64,
    /// Extra couplings below the critical one, same spacing.
    pub below: usize,
    pub matched_eps: Vec<f64>,
    pub target_norm: f64,
}

impl Default for BranchConfig {
    fn default() -> Self {
        Self {
            r: FieldSpec::Cosine {
                c0: 1.0,
                c1: -1.0,
                k: 2.0,
            },
            eps: vec![0.5, 1.0, 2.0],
            points: 30,
            width: 1.0,
            below: 5,
            matched_eps: vec![0.4, 0.2, 0.1, 0.05],
            target_norm: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub mc: McSettings,
    pub branch: BranchConfig,
    pub out_dir: PathBuf,
}

const SECTIONS: [&str; 6] = ["", "problem", "solver", "mc", "branch", "output"];

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Raw `section.key -> value` table with line numbers.
struct Table {
    entries: BTreeMap<(String, String), Entry>,
    last_line: usize,
}

impl Table {
    fn read(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line,
                    message: format!("malformed section header `{content}`"),
                })?;
                let name = name.trim();
                if name.is_empty() || !SECTIONS.contains(&name) {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown section `[{name}]`"),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    message: "empty key".into(),
                });
            }
            let slot = (section.clone(), key.to_string());
            if let Some(prev) = entries.get(&slot) {
                let Entry { line: first, .. } = prev;
                return Err(Error::Config {
                    line,
                    message: format!("key `{key}` already set on line {first}"),
                });
            }
            entries.insert(
                slot,
                Entry {
                    line,
                    value: value.to_string(),
                    used: false,
                },
            );
        }
        Ok(Self { entries, last_line })
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(usize, String)> {
        let e = self.entries.get_mut(&(section.to_string(), key.to_string()))?;
        e.used = true;
        Some((e.line, e.value.clone()))
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.entries.contains_key(&(section.to_string(), key.to_string()))
    }

    fn parse<T: FromStr>(&mut self, section: &str, key: &str) -> Result<Option<(usize, T)>> {
        match self.take(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(|t| Some((line, t)))
                .map_err(|_| Error::Config {
                    line,
                    message: format!("malformed value `{v}` for key `{key}`"),
                }),
        }
    }

    fn missing(&self, section: &str, key: &str) -> Error {
        Error::Config {
            line: self.last_line,
            message: format!("missing required key `{key}` in [{section}]"),
        }
    }

    fn float(&mut self, section: &str, key: &str, check: Check) -> Result<Option<f64>> {
        match self.parse::<f64>(section, key)? {
            None => Ok(None),
            Some((line, v)) => {
                check
                    .apply(key, v)
                    .map_err(|message| Error::Config { line, message })?;
                Ok(Some(v))
            }
        }
    }

    fn required_float(&mut self, section: &str, key: &str, check: Check) -> Result<f64> {
        self.float(section, key, check)?
            .ok_or_else(|| self.missing(section, key))
    }

    fn count(&mut self, section: &str, key: &str, min: usize) -> Result<Option<usize>> {
        match self.parse::<usize>(section, key)? {
            None => Ok(None),
            Some((line, v)) if v < min => Err(Error::Config {
                line,
                message: format!("{key} must be >= {min}, got {v}"),
            }),
            Some((_, v)) => Ok(Some(v)),
        }
    }

    fn field(&mut self, section: &str, key: &str) -> Result<Option<FieldSpec>> {
        match self.take(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<FieldSpec>()
                .map(Some)
                .map_err(|message| Error::Config { line, message }),
        }
    }

    fn list(&mut self, section: &str, key: &str, check: Check) -> Result<Option<Vec<f64>>> {
        let Some((line, v)) = self.take(section, key) else {
            return Ok(None);
        };
        let items = v
            .split(',')
            .map(|s| {
                let s = s.trim();
                let x = s.parse::<f64>().map_err(|_| Error::Config {
                    line,
                    message: format!("malformed number `{s}` in list `{key}`"),
                })?;
                check
                    .apply(key, x)
                    .map_err(|message| Error::Config { line, message })?;
                Ok(x)
            })
            .collect::<Result<Vec<_>>>()?;
        if items.is_empty() {
            return Err(Error::Config {
                line,
                message: format!("list `{key}` is empty"),
            });
        }
        Ok(Some(items))
    }

    fn reject_leftovers(&self) -> Result<()> {
        match self.entries.iter().find(|(_, e)| !e.used) {
            None => Ok(()),
            Some(((section, key), e)) => Err(Error::Config {
                line: e.line,
                message: if section.is_empty() {
                    format!("unknown key `{key}`")
                } else {
                    format!("unknown key `{key}` in [{section}]")
                },
            }),
        }
    }
}

#[derive(Clone, Copy)]
enum Check {
    Any,
    Positive,
    NonNegative,
    Unit,
}

impl Check {
    fn apply(self, key: &str, v: f64) -> std::result::Result<(), String> {
        let key = if key == "epsilon" { "eps" } else { key };
        let ok = v.is_finite()
            && match self {
                Check::Any => true,
                Check::Positive => v > 0.0,
                Check::NonNegative => v >= 0.0,
                Check::Unit => (0.0..=1.0).contains(&v),
            };
        if ok {
            return Ok(());
        }
        Err(match self {
            Check::Any => format!("{key} must be finite"),
            Check::Positive => format!("{key} must be > 0"),
            Check::NonNegative => format!("{key} must be >= 0"),
            Check::Unit => format!("{key} must lie in [0, 1]"),
        })
    }
}

const GENERIC_KEYS: [&str; 5] = ["eps", "epsilon", "a", "b", "f"];
const CRYPTO_KEYS: [&str; 5] = ["c", "K", "N", "r1", "r0"];
const REAL_ESTATE_KEYS: [&str; 6] = ["gamma", "K", "Q", "r1", "r0", "f"];

fn parse_model(t: &mut Table) -> Result<ModelConfig> {
    const S: &str = "problem";
    let declared = t.take(S, "model");
    let name = match &declared {
        Some((_, m)) => m.clone(),
        None if t.has(S, "c") => "crypto".into(),
        None if t.has(S, "gamma") => "real_estate".into(),
        None if t.has(S, "eps") || t.has(S, "epsilon") || t.has(S, "a") => "generic".into(),
        None => "none".into(),
    };
    let allowed: &[&str] = match name.as_str() {
        "generic" => &GENERIC_KEYS,
        "crypto" => &CRYPTO_KEYS,
        "real_estate" => &REAL_ESTATE_KEYS,
        "none" => &[],
        other => {
            return Err(Error::Config {
                line: declared.map_or(0, |d| d.0),
                message: format!("unknown model `{other}` (crypto, real_estate, generic)"),
            })
        }
    };
    let all_model_keys = GENERIC_KEYS.iter().chain(&CRYPTO_KEYS).chain(&REAL_ESTATE_KEYS);
    for key in all_model_keys {
        if !allowed.contains(key) {
            if let Some(e) = t.entries.get(&(S.to_string(), key.to_string())) {
                return Err(Error::Config {
                    line: e.line,
                    message: format!("key `{key}` does not apply to model {name}"),
                });
            }
        }
    }
    let required_field =
        |t: &mut Table, key: &str| -> Result<FieldSpec> { t.field(S, key)?.ok_or_else(|| t.missing(S, key)) };
    Ok(match name.as_str() {
        "generic" => {
            if t.has(S, "eps") && t.has(S, "epsilon") {
                let line = t.entries[&(S.to_string(), "epsilon".to_string())].line;
                return Err(Error::Config {
                    line,
                    message: "both `eps` and `epsilon` given".into(),
                });
            }
            let eps = match t.float(S, "eps", Check::Positive)? {
                Some(e) => e,
                None => t
                    .required_float(S, "epsilon", Check::Positive)
                    .map_err(|e| match e {
                        Error::Config { line, message } if message.starts_with("missing") => Error::Config {
                            line,
                            message: "missing required key `eps` in [problem]".into(),
                        },
                        other => other,
                    })?,
            };
            ModelConfig::Generic {
                eps,
                a: required_field(t, "a")?,
                b: t.field(S, "b")?.unwrap_or(FieldSpec::Constant(0.0)),
                f: t.field(S, "f")?.unwrap_or(FieldSpec::Constant(0.0)),
            }
        }
        "crypto" => ModelConfig::Crypto {
            c: t.required_float(S, "c", Check::Positive)?,
            k_asset: t.required_float(S, "K", Check::Positive)?,
            n_agents: t.required_float(S, "N", Check::Positive)?,
            r1: t.required_float(S, "r1", Check::Any)?,
            r0: required_field(t, "r0")?,
        },
        "real_estate" => ModelConfig::RealEstate {
            gamma: t.required_float(S, "gamma", Check::Positive)?,
            k_asset: t.required_float(S, "K", Check::Positive)?,
            q_wealth: t.required_float(S, "Q", Check::Positive)?,
            r1: t.required_float(S, "r1", Check::Any)?,
            r0: required_field(t, "r0")?,
            rent: t.field(S, "f")?.unwrap_or(FieldSpec::Constant(0.0)),
        },
        _ => ModelConfig::None,
    })
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut t = Table::read(text)?;

    let command = match t.take("", "command") {
        None => None,
        Some((line, v)) => Some(
            v.parse::<Command>()
                .map_err(|message| Error::Config { line, message })?,
        ),
    };

    let model = parse_model(&mut t)?;
    let problem = ProblemConfig {
        n: t.count("problem", "n", 3)?.unwrap_or(1024),
        nu: t.required_float("problem", "nu", Check::Positive)?,
        model,
    };

    let d = SolverConfig::default();
    let solver = SolverConfig {
        tol: t.float("solver", "tol", Check::Positive)?.unwrap_or(d.tol),
        max_outer: t.count("solver", "max_outer", 1)?.unwrap_or(d.max_outer),
        dt: t.float("solver", "dt", Check::Positive)?.unwrap_or(d.dt),
        t_max: t.float("solver", "t_max", Check::Positive)?.unwrap_or(d.t_max),
        evolve_tol: t
            .float("solver", "evolve_tol", Check::Positive)?
            .unwrap_or(d.evolve_tol),
        u0: t.float("solver", "u0", Check::NonNegative)?.unwrap_or(d.u0),
    };

    let d = McSettings::default();
    let seed = match t.parse::<u64>("mc", "seed")? {
        Some((_, s)) => s,
        None => d.seed,
    };
    let mc = McSettings {
        paths: t.count("mc", "paths", 1)?.unwrap_or(d.paths),
        seed,
        dt: t.float("mc", "dt", Check::Positive)?.unwrap_or(d.dt),
        horizon: t.float("mc", "horizon", Check::Positive)?.unwrap_or(d.horizon),
        weight_floor: t
            .float("mc", "weight_floor", Check::NonNegative)?
            .unwrap_or(d.weight_floor),
        x0: t.list("mc", "x0", Check::Unit)?.unwrap_or(d.x0),
        perturbation: t
            .float("mc", "perturbation", Check::Positive)?
            .unwrap_or(d.perturbation),
        growth_paths: t.count("mc", "growth_paths", 1)?.unwrap_or(d.growth_paths),
        growth_dt: t
            .float("mc", "growth_dt", Check::Positive)?
            .unwrap_or(d.growth_dt),
        growth_horizon: t
            .float("mc", "growth_horizon", Check::Positive)?
            .unwrap_or(d.growth_horizon),
    };

    let d = BranchConfig::default();
    let branch = BranchConfig {
        r: t.field("branch", "r")?.unwrap_or(d.r),
        eps: t.list("branch", "eps", Check::Positive)?.unwrap_or(d.eps),
        points: t.count("branch", "points", 2)?.unwrap_or(d.points),
        width: t.float("branch", "width", Check::Positive)?.unwrap_or(d.width),
        below: t.count("branch", "below", 0)?.unwrap_or(d.below),
        matched_eps: t
            .list("branch", "matched_eps", Check::Positive)?
            .unwrap_or(d.matched_eps),
        target_norm: t
            .float("branch", "target_norm", Check::Positive)?
            .unwrap_or(d.target_norm),
    };

    let out_dir = t
        .take("output", "dir")
        .map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));

    t.reject_leftovers()?;
    Ok(RunConfig {
        command,
        problem,
        solver,
        mc,
        branch,
        out_dir,
    })
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

/// Canonical text form; `parse_config(&emit_config(c)) == c`.
pub fn emit_config(c: &RunConfig) -> String {
    let mut s = String::new();
    if let Some(cmd) = c.command {
        let _ = writeln!(s, "command = {cmd}\n");
    }
    let p = &c.problem;
    let _ = writeln!(s, "[problem]");
    match &p.model {
        ModelConfig::None => {}
        ModelConfig::Generic { eps, a, b, f } => {
            let _ = writeln!(s, "model = generic");
            let _ = writeln!(s, "eps = {eps:?}\na = {a}\nb = {b}\nf = {f}");
        }
        ModelConfig::Crypto {
            c,
            k_asset,
            n_agents,
            r1,
            r0,
        } => {
            let _ = writeln!(s, "model = crypto");
            let _ = writeln!(
                s,
                "c = {c:?}\nK = {k_asset:?}\nN = {n_agents:?}\nr1 = {r1:?}\nr0 = {r0}"
            );
        }
        ModelConfig::RealEstate {
            gamma,
            k_asset,
            q_wealth,
            r1,
            r0,
            rent,
        } => {
            let _ = writeln!(s, "model = real_estate");
            let _ = writeln!(
                s,
                "gamma = {gamma:?}\nK = {k_asset:?}\nQ = {q_wealth:?}\nr1 = {r1:?}\nr0 = {r0}\nf = {rent}"
            );
        }
    }
    let _ = writeln!(s, "n = {}\nnu = {:?}\n", p.n, p.nu);

    let v = &c.solver;
    let _ = writeln!(
        s,
        "[solver]\ntol = {:?}\nmax_outer = {}\ndt = {:?}\nt_max = {:?}\nevolve_tol = {:?}\nu0 = {:?}\n",
        v.tol, v.max_outer, v.dt, v.t_max, v.evolve_tol, v.u0
    );

    let m = &c.mc;
    let _ = writeln!(
        s,
        "[mc]\npaths = {}\nseed = {}\ndt = {:?}\nhorizon = {:?}\nweight_floor = {:?}\nx0 = {}\n\
         perturbation = {:?}\ngrowth_paths = {}\ngrowth_dt = {:?}\ngrowth_horizon = {:?}\n",
        m.paths,
        m.seed,
        m.dt,
        m.horizon,
        m.weight_floor,
        list(&m.x0),
        m.perturbation,
        m.growth_paths,
        m.growth_dt,
        m.growth_horizon
    );

    let b = &c.branch;
    let _ = writeln!(
        s,
        "[branch]\nr = {}\neps = {}\npoints = {}\nwidth = {:?}\nbelow = {}\nmatched_eps = {}\ntarget_norm = {:?}\n",
        b.r,
        list(&b.eps),
        b.points,
        b.width,
        b.below,
        list(&b.matched_eps),
        b.target_norm
    );
    let _ = writeln!(s, "[output]\ndir = {}", c.out_dir.display());
    s
}
