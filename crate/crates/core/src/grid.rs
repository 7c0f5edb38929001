//! Uniform grid on [0, 1] and the discrete Neumann calculus shared by every
//! solver in the crate.
//!
//! The Neumann condition `u'(0) = u'(1) = 0` is encoded by ghost-node
//! reflection (`u_{-1} = u_1`, `u_n = u_{n-2}`), which keeps the Laplacian
//! second-order accurate up to the boundary. The centered first derivative is
//! defined as exactly zero on the two boundary nodes.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniform grid `x_i = i h`, `i = 0..n`, with `h = 1 / (n - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    n: usize,
    h: f64,
}

impl Grid1D {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "node count must be at least 3, got {n}"
            )));
        }
        Ok(Self {
            n,
            h: 1.0 / (n - 1) as f64,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Node coordinate. The last node is pinned to exactly 1.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            1.0
        } else {
            i as f64 * self.h
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }

    /// Trapezoid quadrature weight of node `i` (without the factor `h`).
    #[inline]
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5
        } else {
            1.0
        }
    }
}

/// Builds the uniform grid with `n` nodes.
pub fn make_grid(n: usize) -> Result<Grid1D> {
    Grid1D::new(n)
}

/// Values of a function at the nodes of a [`Grid1D`]. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid1D,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!(
                "non-finite value {} at node {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        assert!(c.is_finite(), "constant field must be finite");
        Self {
            grid,
            values: vec![c; grid.n()],
        }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every node. Panics if `f` returns a non-finite value.
    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = grid.nodes().map(f).collect();
        assert!(
            values.iter().all(|v| v.is_finite()),
            "sampled function produced a non-finite value"
        );
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid-rule L1 norm.
    pub fn l1_norm(&self) -> f64 {
        let h = self.grid.h();
        h * self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.trapezoid_weight(i) * v.abs())
            .sum::<f64>()
    }

    /// Trapezoid-rule integral.
    pub fn integral(&self) -> f64 {
        let h = self.grid.h();
        h * self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.trapezoid_weight(i) * v)
            .sum::<f64>()
    }

    /// True when every value equals the first one exactly.
    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Combines two fields on the same grid node by node.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn shifted(&self, s: f64) -> Self {
        self.map(|v| v + s)
    }

    /// `max_i |self_i - other_i|`.
    pub fn distance(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Piecewise-linear interpolation; `x` is clamped to [0, 1].
    pub fn interpolate(&self, x: f64) -> f64 {
        let n = self.grid.n();
        let s = x.clamp(0.0, 1.0) * (n - 1) as f64;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Linear resampling onto another grid.
    pub fn resample(&self, grid: Grid1D) -> Self {
        if grid == self.grid {
            return self.clone();
        }
        ScalarField::from_fn(grid, |x| self.interpolate(x))
    }

    /// Writes the field as `x,value` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.x(i), v)?;
        }
        Ok(())
    }

    /// Reads an `x,value` CSV written on a uniform grid over [0, 1].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(',').map(str::trim);
            let (Some(xc), Some(vc), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Csv(format!("line {}: expected two columns", lineno + 1)));
            };
            match (xc.parse::<f64>(), vc.parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    vs.push(v);
                }
                // header row
                _ if xs.is_empty() && lineno == 0 => continue,
                _ => return Err(Error::Csv(format!("line {}: cannot parse `{line}`", lineno + 1))),
            }
        }
        let grid = Grid1D::new(xs.len())?;
        for (i, &x) in xs.iter().enumerate() {
            if (x - grid.x(i)).abs() > 1e-9 {
                return Err(Error::Csv(format!(
                    "node {i} at x = {x} is not on the uniform grid over [0, 1]"
                )));
            }
        }
        ScalarField::new(grid, vs)
    }
}

/// Neumann Laplacian with ghost-node reflection.
///
/// Interior: `(u_{i-1} - 2 u_i + u_{i+1}) / h^2`; boundary: `2 (u_1 - u_0) / h^2`
/// and `2 (u_{n-2} - u_{n-1}) / h^2`. Differences are formed before they are
/// combined so constants are annihilated exactly.
pub fn neumann_laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let n = grid.n();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let v = u.values();
    let mut out = Vec::with_capacity(n);
    out.push(2.0 * (v[1] - v[0]) * inv_h2);
    for i in 1..n - 1 {
        out.push(((v[i + 1] - v[i]) - (v[i] - v[i - 1])) * inv_h2);
    }
    out.push(2.0 * (v[n - 2] - v[n - 1]) * inv_h2);
    ScalarField { grid, values: out }
}

/// Centered first derivative, zero on the boundary nodes.
pub fn centered_derivative(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let n = grid.n();
    let inv_2h = 0.5 / grid.h();
    let v = u.values();
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) * inv_2h;
    }
    ScalarField { grid, values: out }
}

/// `|u'|^2` from the centered derivative; zero on the boundary nodes.
pub fn gradient_squared(u: &ScalarField) -> ScalarField {
    centered_derivative(u).map(|g| g * g)
}

/// `(sup norm, trapezoid L1 norm)`.
pub fn norms(u: &ScalarField) -> (f64, f64) {
    (u.sup_norm(), u.l1_norm())
}
