//! Named coefficient families used by configs and scenarios.
//!
//! A [`FieldSpec`] is either a closed-form family evaluated on the grid or a
//! path to an `x,value` CSV sample that is linearly resampled.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, ScalarField};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    /// `c`
    Constant(f64),
    /// `p + q x`
    Affine { p: f64, q: f64 },
    /// `c0 + c1 cos(k pi x)`
    Cosine { c0: f64, c1: f64, k: f64 },
    /// `x,value` CSV file.
    Samples(PathBuf),
}

impl FieldSpec {
    pub fn evaluate(&self, grid: Grid1D) -> Result<ScalarField> {
        Ok(match *self {
            FieldSpec::Constant(c) => ScalarField::constant(grid, c),
            FieldSpec::Affine { p, q } => ScalarField::from_fn(grid, |x| p + q * x),
            FieldSpec::Cosine { c0, c1, k } => {
                ScalarField::from_fn(grid, |x| c0 + c1 * (k * std::f64::consts::PI * x).cos())
            }
            FieldSpec::Samples(ref path) => {
                let file = File::open(path)
                    .map_err(|e| Error::Csv(format!("cannot open {}: {e}", path.display())))?;
                ScalarField::read_csv(BufReader::new(file))?.resample(grid)
            }
        })
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Constant(c) => write!(f, "const({c:?})"),
            FieldSpec::Affine { p, q } => write!(f, "affine({p:?}, {q:?})"),
            FieldSpec::Cosine { c0, c1, k } => write!(f, "cos({c0:?}, {c1:?}, {k:?})"),
            FieldSpec::Samples(p) => write!(f, "csv({})", p.display()),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(c) = s.parse::<f64>() {
            return finite(c).map(FieldSpec::Constant);
        }
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| format!("expected a number or family(...), got `{s}`"))?;
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("missing closing parenthesis in `{s}`"))?;
        let name = name.trim();
        if name == "csv" {
            let path = inner.trim();
            if path.is_empty() {
                return Err("csv() needs a path".into());
            }
            return Ok(FieldSpec::Samples(PathBuf::from(path)));
        }
        let args = inner
            .split(',')
            .map(|a| {
                a.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("malformed number `{}` in `{s}`", a.trim()))
                    .and_then(finite)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        match (name, args.as_slice()) {
            ("const", [c]) => Ok(FieldSpec::Constant(*c)),
            ("affine", [p, q]) => Ok(FieldSpec::Affine { p: *p, q: *q }),
            ("cos", [c0, c1, k]) => Ok(FieldSpec::Cosine {
                c0: *c0,
                c1: *c1,
                k: *k,
            }),
            ("const" | "affine" | "cos", _) => Err(format!("wrong number of arguments in `{s}`")),
            _ => Err(format!("unknown field family `{name}`")),
        }
    }
}

fn finite(v: f64) -> std::result::Result<f64, String> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("value {v} is not finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display_roundtrip() {
        for s in [
            "const(0.5)",
            "affine(1.0, -3.0)",
            "cos(1.0, -1.0, 2.0)",
            "csv(data/r0.csv)",
        ] {
            let spec: FieldSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<FieldSpec>().unwrap(), spec);
        }
        assert_eq!("2.5".parse::<FieldSpec>().unwrap(), FieldSpec::Constant(2.5));
        assert!("affine(1)".parse::<FieldSpec>().is_err());
        assert!("wiggle(1, 2)".parse::<FieldSpec>().is_err());
        assert!("affine(1, x)".parse::<FieldSpec>().is_err());
    }

    #[test]
    fn families_evaluate() {
        let g = Grid1D::new(5).unwrap();
        let f = FieldSpec::Affine { p: 1.0, q: -3.0 }.evaluate(g).unwrap();
        assert_eq!(f.values(), &[1.0, 0.25, -0.5, -1.25, -2.0]);
        let r = FieldSpec::Cosine {
            c0: 1.0,
            c1: -1.0,
            k: 2.0,
        }
        .evaluate(g)
        .unwrap();
        assert!(r.values()[0].abs() < 1e-15);
        assert!((r.values()[2] - 2.0).abs() < 1e-15);
    }
}
