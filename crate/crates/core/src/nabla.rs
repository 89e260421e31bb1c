//! Nabla derivative and nabla integral of functions sampled on a [`Grid`].
//!
//! Every grid point is left-scattered, so the derivative at `t_j` is the
//! backward quotient `(f_j - f_{j-1}) / nu_j`. A derivative is undefined at
//! the first point of its operand's domain; [`GridFunction::start`] tracks
//! the first index where a function is defined.

use crate::error::{Error, Result};
use crate::timescale::Grid;

/// Vector-valued samples on grid indices `start..=N`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<'g> {
    grid: &'g Grid,
    start: usize,
    n: usize,
    values: Vec<f64>,
}

impl<'g> GridFunction<'g> {
    /// Row-major samples for every grid point.
    pub fn new(grid: &'g Grid, n: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_start(grid, 0, n, values)
    }

    pub fn with_start(grid: &'g Grid, start: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::ShapeMismatch("component count must be positive".into()));
        }
        if start > grid.last() {
            return Err(Error::ShapeMismatch(format!("start index {start} beyond grid")));
        }
        let rows = grid.len() - start;
        if values.len() != rows * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values ({rows} points x {n}), got {}",
                rows * n,
                values.len()
            )));
        }
        Ok(Self { grid, start, n, values })
    }

    pub fn from_fn(grid: &'g Grid, n: usize, mut f: impl FnMut(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len() * n);
        for &t in grid.points() {
            let v = f(t);
            if v.len() != n {
                return Err(Error::ShapeMismatch(format!("sample has {} components, expected {n}", v.len())));
            }
            values.extend(v);
        }
        Self::new(grid, n, values)
    }

    pub fn scalar(grid: &'g Grid, mut f: impl FnMut(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self { grid, start: 0, n: 1, values }
    }

    pub fn constant(grid: &'g Grid, value: &[f64]) -> Self {
        let values = value.iter().copied().cycle().take(grid.len() * value.len()).collect();
        Self { grid, start: 0, n: value.len(), values }
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sample at grid index `j`; panics outside `start..=N`.
    pub fn at(&self, j: usize) -> &[f64] {
        assert!(j >= self.start && j <= self.grid.last(), "index {j} outside domain");
        let row = j - self.start;
        &self.values[row * self.n..(row + 1) * self.n]
    }

    pub fn get(&self, j: usize) -> Option<&[f64]> {
        (j >= self.start && j <= self.grid.last()).then(|| self.at(j))
    }

    fn same_grid(&self, other: &GridFunction<'_>) -> Result<()> {
        if std::ptr::eq(self.grid, other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise combination on the common domain.
    pub fn zip_with(&self, other: &GridFunction<'_>, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction<'g>> {
        self.same_grid(other)?;
        if self.n != other.n {
            return Err(Error::ShapeMismatch("component counts differ".into()));
        }
        let start = self.start.max(other.start);
        let values = (start..=self.grid.last())
            .flat_map(|j| self.at(j).iter().zip(other.at(j)).map(|(&a, &b)| f(a, b)).collect::<Vec<_>>())
            .collect();
        GridFunction::with_start(self.grid, start, self.n, values)
    }

    pub fn scale(&self, c: f64) -> GridFunction<'g> {
        GridFunction { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }
}

/// `(f_j - f_{j-1}) / nu_j` on indices `start+1..=N`.
pub fn nabla_derivative<'g>(f: &GridFunction<'g>) -> Result<GridFunction<'g>> {
    let grid = f.grid;
    let count = grid.len() - f.start;
    if count < 2 {
        return Err(Error::TooFewPoints(count));
    }
    let mut values = Vec::with_capacity((count - 1) * f.n);
    for j in f.start + 1..=grid.last() {
        let nu = grid.nu(j);
        values.extend(f.at(j).iter().zip(f.at(j - 1)).map(|(a, b)| (a - b) / nu));
    }
    GridFunction::with_start(grid, f.start + 1, f.n, values)
}

/// Nabla derivative of the composite `t -> f(rho^alpha0(t))`.
///
/// Computed directly as `(f_{j-alpha0} - f_{j-alpha0-1}) / nu_j`, defined on
/// indices `start+alpha0+1..=N`.
pub fn delayed_nabla<'g>(f: &GridFunction<'g>, alpha0: usize) -> Result<GridFunction<'g>> {
    let grid = f.grid;
    let first = f.start + alpha0 + 1;
    if first > grid.last() {
        return Err(Error::IndexUnderflow {
            index: grid.last() as i64 - alpha0 as i64 - 1,
        });
    }
    let mut values = Vec::with_capacity((grid.last() + 1 - first) * f.n);
    for j in first..=grid.last() {
        let nu = grid.nu(j);
        let (cur, prev) = (f.at(j - alpha0), f.at(j - alpha0 - 1));
        values.extend(cur.iter().zip(prev).map(|(a, b)| (a - b) / nu));
    }
    GridFunction::with_start(grid, first, f.n, values)
}

/// Nabla integral over `(t_from, t_to]`: `sum_{j=from+1}^{to} nu_j f_j`.
pub fn nabla_integral(f: &GridFunction<'_>, from: usize, to: usize) -> Result<Vec<f64>> {
    if from > to || to > f.grid.last() {
        return Err(Error::BadRange(format!("integral from index {from} to {to}")));
    }
    if from < to && from + 1 < f.start {
        return Err(Error::BadRange(format!(
            "integrand defined from index {}, integral starts after {from}",
            f.start
        )));
    }
    let mut acc = vec![0.0; f.n];
    for j in from + 1..=to {
        let nu = f.grid.nu(j);
        for (a, v) in acc.iter_mut().zip(f.at(j)) {
            *a += nu * v;
        }
    }
    Ok(acc)
}

/// Largest violation of `(fg)^nabla = f^nabla g + f^rho g^nabla` over the grid.
pub fn product_rule_residual(f: &GridFunction<'_>, g: &GridFunction<'_>) -> Result<f64> {
    f.same_grid(g)?;
    if f.n != 1 || g.n != 1 {
        return Err(Error::ShapeMismatch("product rule check takes scalar functions".into()));
    }
    let fg = f.zip_with(g, |a, b| a * b)?;
    let dfg = nabla_derivative(&fg)?;
    let df = nabla_derivative(f)?;
    let dg = nabla_derivative(g)?;
    let start = dfg.start.max(df.start).max(dg.start);
    Ok((start..=f.grid.last())
        .map(|j| (dfg.at(j)[0] - df.at(j)[0] * g.at(j)[0] - f.at(j - 1)[0] * dg.at(j)[0]).abs())
        .fold(0.0, f64::max))
}
