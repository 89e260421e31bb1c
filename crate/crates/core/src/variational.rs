//! Delayed variational problems on a grid.
//!
//! The functional is
//!
//! ```text
//! J(y) = sum_{i=A+1}^{N} nu_i L(t_i, y_{i-1}, (y_i - y_{i-1})/nu_i,
//!                             y_{i-a-1}, (y_{i-a} - y_{i-a-1})/nu_{i-a})
//! ```
//!
//! with delay `a = alpha0`, `A = alpha0` the index of the left endpoint,
//! the prehistory fixed on indices `0..=A` and `y_N` fixed. The free
//! unknowns are `y_{A+1}, ..., y_{N-1}`.
//!
//! [`gradient`](VariationalProblem::gradient) is the exact derivative of
//! the discrete sum and is what [`solve_el`] drives to zero. The
//! Euler-Lagrange residuals in [`ResidualReport`] are computed separately,
//! region by region, as an independent check on the solution.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{Lagrangian, SlotPartials};
use crate::newton::{self, SolverOptions, StationarySystem};
use crate::timescale::Grid;

/// Relative tolerance for checking that a trajectory carries the problem's
/// prehistory and endpoint.
const CONFORM_TOL: f64 = 1e-12;

/// Row-major samples `y_0, ..., y_N`, each in `R^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    n: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || !values.len().is_multiple_of(n) {
            return Err(Error::ShapeMismatch(format!("{} values do not split into rows of {n}", values.len())));
        }
        Ok(Self { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn zeros(n: usize, rows: usize) -> Self {
        Self { n, values: vec![0.0; n * rows] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `self + eps * other`.
    pub fn axpy(&self, eps: f64, other: &Trajectory) -> Trajectory {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + eps * b).collect();
        Trajectory { n: self.n, values }
    }
}

/// Residual vectors attached to grid indices, with their norms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualGroup {
    pub indices: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    pub max: f64,
    pub rms: f64,
}

impl ResidualGroup {
    pub fn new(indices: Vec<usize>, values: Vec<Vec<f64>>) -> Self {
        let flat: Vec<f64> = values.iter().flatten().copied().collect();
        let max = flat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let rms = if flat.is_empty() {
            0.0
        } else {
            (flat.iter().map(|v| v * v).sum::<f64>() / flat.len() as f64).sqrt()
        };
        Self { indices, values, max, rms }
    }

    pub fn at(&self, index: usize) -> Option<&[f64]> {
        self.indices.iter().position(|&i| i == index).map(|k| self.values[k].as_slice())
    }
}

/// Euler-Lagrange residuals of a trajectory.
///
/// * `delayed_region`: indices `A+2..=N-a`, the equation carrying the
///   shifted `d3`/`d4` terms.
/// * `tail_region`: indices `N-a+1..=N`, the plain equation.
/// * `boundary`: `dL/d(v4)` at index `N` (zero when `a = 0`).
/// * `gradient`: `dJ/dy_k` for the free indices `A+1..=N-1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub delayed_region: ResidualGroup,
    pub tail_region: ResidualGroup,
    pub boundary: ResidualGroup,
    pub gradient: ResidualGroup,
}

impl ResidualReport {
    /// Largest residual over the three equation groups.
    pub fn max_equation_residual(&self) -> f64 {
        self.delayed_region.max.max(self.tail_region.max).max(self.boundary.max)
    }
}

#[derive(Clone)]
pub struct VariationalProblem {
    grid: Grid,
    n: usize,
    alpha0: usize,
    prehistory: Vec<f64>,
    endpoint: Vec<f64>,
    lagrangian: Arc<dyn Lagrangian>,
}

impl std::fmt::Debug for VariationalProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VariationalProblem")
            .field("grid", &self.grid)
            .field("n", &self.n)
            .field("alpha0", &self.alpha0)
            .field("prehistory", &self.prehistory)
            .field("endpoint", &self.endpoint)
            .finish_non_exhaustive()
    }
}

/// Checks the index geometry shared by variational and control problems.
pub(crate) fn check_geometry(grid: &Grid, alpha0: usize, min_span: usize) -> Result<()> {
    // a < rho^alpha0(b) needs N - A >= alpha0 + 1
    let need = alpha0 + (alpha0 + 1).max(min_span);
    if grid.last() < need {
        return Err(Error::BadRange(format!(
            "delay exceeds grid: alpha0={alpha0} needs at least {need} steps, grid has {}",
            grid.last()
        )));
    }
    Ok(())
}

pub(crate) fn flatten_rows(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Vec<f64>> {
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch(format!("{what} rows must have {n} components")));
    }
    Ok(rows.concat())
}

impl VariationalProblem {
    /// `prehistory` holds rows for indices `0..=alpha0`.
    pub fn new(
        grid: Grid,
        n: usize,
        alpha0: usize,
        prehistory: Vec<Vec<f64>>,
        endpoint: Vec<f64>,
        lagrangian: Arc<dyn Lagrangian>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::ShapeMismatch("state dimension must be positive".into()));
        }
        check_geometry(&grid, alpha0, 2)?;
        if prehistory.len() != alpha0 + 1 {
            return Err(Error::ShapeMismatch(format!(
                "prehistory needs {} rows (indices 0..={alpha0}), got {}",
                alpha0 + 1,
                prehistory.len()
            )));
        }
        if endpoint.len() != n {
            return Err(Error::ShapeMismatch(format!("endpoint has {} components, expected {n}", endpoint.len())));
        }
        let prehistory = flatten_rows(&prehistory, n, "prehistory")?;
        Ok(Self { grid, n, alpha0, prehistory, endpoint, lagrangian })
    }

    /// Prehistory sampled from `phi` at the grid points `0..=alpha0`.
    pub fn with_prehistory_fn(
        grid: Grid,
        n: usize,
        alpha0: usize,
        phi: impl Fn(f64) -> Vec<f64>,
        endpoint: Vec<f64>,
        lagrangian: Arc<dyn Lagrangian>,
    ) -> Result<Self> {
        let rows = (0..=alpha0.min(grid.last())).map(|j| phi(grid.point(j))).collect();
        Self::new(grid, n, alpha0, rows, endpoint, lagrangian)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha0(&self) -> usize {
        self.alpha0
    }

    /// Index of the left endpoint `a`.
    pub fn a_index(&self) -> usize {
        self.alpha0
    }

    pub fn prehistory_row(&self, j: usize) -> &[f64] {
        &self.prehistory[j * self.n..(j + 1) * self.n]
    }

    pub fn endpoint(&self) -> &[f64] {
        &self.endpoint
    }

    pub fn lagrangian(&self) -> &Arc<dyn Lagrangian> {
        &self.lagrangian
    }

    pub fn free_count(&self) -> usize {
        self.grid.last() - self.alpha0 - 1
    }

    /// Straight line in the index from `y_A` to `y_N`.
    pub fn initial_guess(&self) -> Trajectory {
        let last = self.grid.last();
        let a = self.alpha0;
        let mut y = Trajectory::zeros(self.n, last + 1);
        for j in 0..=a {
            y.row_mut(j).copy_from_slice(self.prehistory_row(j));
        }
        let start = self.prehistory_row(a).to_vec();
        for j in a + 1..=last {
            let s = (j - a) as f64 / (last - a) as f64;
            for (c, v) in y.row_mut(j).iter_mut().enumerate() {
                *v = start[c] + s * (self.endpoint[c] - start[c]);
            }
        }
        y
    }

    /// Trajectory with the given free rows `A+1..=N-1` (flattened).
    pub fn assemble(&self, free: &[f64]) -> Trajectory {
        let mut y = self.initial_guess();
        let first = (self.alpha0 + 1) * self.n;
        y.values[first..first + free.len()].copy_from_slice(free);
        y
    }

    pub fn free_values(&self, y: &Trajectory) -> Vec<f64> {
        let first = (self.alpha0 + 1) * self.n;
        y.values[first..self.grid.last() * self.n].to_vec()
    }

    pub fn check_shape(&self, y: &Trajectory) -> Result<()> {
        if y.n != self.n || y.rows() != self.grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "trajectory has {} rows of {} components, grid needs {} rows of {}",
                y.rows(),
                y.n,
                self.grid.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn check_conforms(&self, y: &Trajectory) -> Result<()> {
        self.check_shape(y)?;
        let close = |a: f64, b: f64| (a - b).abs() <= CONFORM_TOL * a.abs().max(b.abs()).max(1.0);
        for j in 0..=self.alpha0 {
            if !y.row(j).iter().zip(self.prehistory_row(j)).all(|(&a, &b)| close(a, b)) {
                return Err(Error::ShapeMismatch(format!("row {j} differs from the prehistory")));
            }
        }
        if !y.row(self.grid.last()).iter().zip(&self.endpoint).all(|(&a, &b)| close(a, b)) {
            return Err(Error::ShapeMismatch("last row differs from the endpoint".into()));
        }
        Ok(())
    }

    /// Lagrangian arguments at grid index `i` (`A+1 <= i <= N`).
    pub fn slots(&self, y: &Trajectory, i: usize) -> [Vec<f64>; 4] {
        delayed_slots(&self.grid, self.alpha0, y, i, None)
    }

    fn partials_table(&self, y: &Trajectory) -> Vec<SlotPartials> {
        (self.alpha0 + 1..=self.grid.last())
            .map(|i| {
                let s = self.slots(y, i);
                self.lagrangian.partials(self.grid.point(i), [&s[0], &s[1], &s[2], &s[3]])
            })
            .collect()
    }

    pub fn evaluate_functional(&self, y: &Trajectory) -> Result<f64> {
        self.check_conforms(y)?;
        self.functional_unchecked(y)
    }

    fn functional_unchecked(&self, y: &Trajectory) -> Result<f64> {
        let mut total = 0.0;
        for i in self.alpha0 + 1..=self.grid.last() {
            let s = self.slots(y, i);
            let l = self.lagrangian.value(self.grid.point(i), [&s[0], &s[1], &s[2], &s[3]]);
            if !l.is_finite() {
                return Err(Error::NonFiniteLagrangian { index: i });
            }
            total += self.grid.nu(i) * l;
        }
        Ok(total)
    }

    /// First variation of `J` at `y` in the direction `eta`.
    pub fn first_variation(&self, y: &Trajectory, eta: &Trajectory) -> Result<f64> {
        self.check_conforms(y)?;
        self.check_shape(eta)?;
        let last = self.grid.last();
        for j in (0..=self.alpha0).chain([last]) {
            if eta.row(j).iter().any(|&v| v != 0.0) {
                return Err(Error::BadVariation { index: j });
            }
        }
        let a = self.alpha0;
        let table = self.partials_table(y);
        let mut total = 0.0;
        for i in a + 1..=last {
            let p = &table[i - a - 1];
            let nu = self.grid.nu(i);
            let nu_delay = self.grid.nu(i - a);
            let mut acc = 0.0;
            for c in 0..self.n {
                let d_eta = (eta.row(i)[c] - eta.row(i - 1)[c]) / nu;
                let d_eta_delay = (eta.row(i - a)[c] - eta.row(i - a - 1)[c]) / nu_delay;
                acc += p[0][c] * eta.row(i - 1)[c]
                    + p[1][c] * d_eta
                    + p[2][c] * eta.row(i - a - 1)[c]
                    + p[3][c] * d_eta_delay;
            }
            total += nu * acc;
        }
        Ok(total)
    }

    /// Exact gradient of the discrete functional with respect to the free
    /// rows, flattened row-major.
    pub fn gradient(&self, y: &Trajectory) -> Result<Vec<f64>> {
        self.check_shape(y)?;
        let table = self.partials_table(y);
        Ok(self.gradient_from_table(&table))
    }

    fn gradient_from_table(&self, table: &[SlotPartials]) -> Vec<f64> {
        let (a, n, last) = (self.alpha0, self.n, self.grid.last());
        let mut full = vec![0.0; (last + 1) * n];
        let mut add = |j: usize, w: f64, v: &[f64]| {
            for c in 0..n {
                full[j * n + c] += w * v[c];
            }
        };
        for i in a + 1..=last {
            let p = &table[i - a - 1];
            let nu = self.grid.nu(i);
            let ratio = nu / self.grid.nu(i - a);
            add(i - 1, nu, &p[0]);
            add(i, 1.0, &p[1]);
            add(i - 1, -1.0, &p[1]);
            add(i - a - 1, nu, &p[2]);
            add(i - a, ratio, &p[3]);
            add(i - a - 1, -ratio, &p[3]);
        }
        full[(a + 1) * n..last * n].to_vec()
    }

    pub fn el_residuals(&self, y: &Trajectory) -> Result<ResidualReport> {
        self.check_shape(y)?;
        let (a, n, last) = (self.alpha0, self.n, self.grid.last());
        let q_inv = self.grid.spec().q().powi(-(a as i32));
        let table = self.partials_table(y);
        // Partials at grid index i.
        let p = |i: usize| &table[i - a - 1];

        let mut delayed = (Vec::new(), Vec::new());
        for i in a + 2..=last - a {
            let nu = self.grid.nu(i);
            let r: Vec<f64> = (0..n)
                .map(|c| {
                    (p(i)[1][c] - p(i - 1)[1][c]) / nu
                        + q_inv * (p(i + a)[3][c] - p(i + a - 1)[3][c]) / nu
                        - p(i)[0][c]
                        - q_inv * p(i + a)[2][c]
                })
                .collect();
            delayed.0.push(i);
            delayed.1.push(r);
        }

        let mut tail = (Vec::new(), Vec::new());
        for i in (last - a + 1).max(a + 2)..=last {
            let nu = self.grid.nu(i);
            let r: Vec<f64> = (0..n).map(|c| (p(i)[1][c] - p(i - 1)[1][c]) / nu - p(i)[0][c]).collect();
            tail.0.push(i);
            tail.1.push(r);
        }

        let boundary = if a == 0 { vec![0.0; n] } else { p(last)[3].clone() };

        let grad = self.gradient_from_table(&table);
        let grad_rows = grad.chunks(n).map(<[f64]>::to_vec).collect();

        Ok(ResidualReport {
            delayed_region: ResidualGroup::new(delayed.0, delayed.1),
            tail_region: ResidualGroup::new(tail.0, tail.1),
            boundary: ResidualGroup::new(vec![last], vec![boundary]),
            gradient: ResidualGroup::new((a + 1..last).collect(), grad_rows),
        })
    }
}

/// Lagrangian slot values at index `i`. With `second = Some(rows)` the
/// second slot takes `rows[i-1]` (the control `u^rho`) instead of the
/// nabla derivative.
pub(crate) fn delayed_slots(
    grid: &Grid,
    alpha0: usize,
    y: &Trajectory,
    i: usize,
    second: Option<&[f64]>,
) -> [Vec<f64>; 4] {
    let a = alpha0;
    let nu = grid.nu(i);
    let nu_delay = grid.nu(i - a);
    let quotient = |hi: &[f64], lo: &[f64], step: f64| -> Vec<f64> {
        hi.iter().zip(lo).map(|(x, y)| (x - y) / step).collect()
    };
    let v2 = match second {
        Some(u) => u.to_vec(),
        None => quotient(y.row(i), y.row(i - 1), nu),
    };
    [
        y.row(i - 1).to_vec(),
        v2,
        y.row(i - a - 1).to_vec(),
        quotient(y.row(i - a), y.row(i - a - 1), nu_delay),
    ]
}

struct ElSystem<'p> {
    problem: &'p VariationalProblem,
}

impl StationarySystem for ElSystem<'_> {
    fn dim(&self) -> usize {
        self.problem.free_count() * self.problem.n
    }

    fn half_bandwidth(&self) -> usize {
        (self.problem.alpha0 + 2) * self.problem.n - 1
    }

    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let y = self.problem.assemble(z);
        let table = self.problem.partials_table(&y);
        let g = self.problem.gradient_from_table(&table);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLagrangian { index: 0 });
        }
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElSolution {
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Newton iteration on the exact gradient of the discrete functional.
pub fn solve_el(problem: &VariationalProblem, y_init: &Trajectory, opts: &SolverOptions) -> Result<ElSolution> {
    problem.check_conforms(y_init)?;
    let system = ElSystem { problem };
    let out = newton::solve(&system, &problem.free_values(y_init), opts)?;
    Ok(ElSolution {
        trajectory: problem.assemble(&out.z),
        iterations: out.iterations,
        gradient_norm: out.residual_norm,
    })
}
