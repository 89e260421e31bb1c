//! Delayed optimal control on a grid.
//!
//! Minimize `J(y, u) = sum_{i=A+1}^{N} nu_i L(t_i, y_{i-1}, u_{i-1},
//! y_{i-a-1}, nabla y(t_{i-a}))` subject to `nabla y(t_i) = G(t_i, y_{i-1},
//! u_{i-1})`. The multiplier enters the modified index as `lambda_{i-1}`,
//! so both `u` and `lambda` live on indices `A..=N-1`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{Dynamics, DynamicsJacobians, Lagrangian, SlotPartials};
use crate::newton::{self, SolverOptions, StationarySystem};
use crate::timescale::Grid;
use crate::variational::{check_geometry, delayed_slots, flatten_rows, ResidualGroup, Trajectory};

/// State, control and adjoint samples. `u` and `lambda` have one row per
/// index `A..=N-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlState {
    pub y: Trajectory,
    pub u: Trajectory,
    pub lambda: Trajectory,
}

/// Residuals of the necessary conditions.
///
/// * `adjoint_delayed`: indices `A+2..=N-a`, adjoint equation with the
///   shifted delay terms.
/// * `adjoint_tail`: indices `N-a+1..=N`.
/// * `control`: indices `A+1..=N`, `lambda^rho dG/du - dL/du`.
/// * `boundary`: `dL/d(v4)` at index `N` (zero when `a = 0`).
/// * `dynamics`: `nabla y - G` on `A+1..=N`.
/// * `stationarity`: gradient of the modified index, grouped per grid index.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlResidualReport {
    pub adjoint_delayed: ResidualGroup,
    pub adjoint_tail: ResidualGroup,
    pub control: ResidualGroup,
    pub boundary: ResidualGroup,
    pub dynamics: ResidualGroup,
    pub stationarity: ResidualGroup,
}

impl ControlResidualReport {
    pub fn max_condition_residual(&self) -> f64 {
        [&self.adjoint_delayed, &self.adjoint_tail, &self.control, &self.boundary, &self.dynamics]
            .iter()
            .map(|g| g.max)
            .fold(0.0, f64::max)
    }
}

#[derive(Clone)]
pub struct ControlProblem {
    grid: Grid,
    n: usize,
    m: usize,
    alpha0: usize,
    prehistory: Vec<f64>,
    terminal: Vec<f64>,
    lagrangian: Arc<dyn Lagrangian>,
    dynamics: Arc<dyn Dynamics>,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("grid", &self.grid)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("alpha0", &self.alpha0)
            .field("prehistory", &self.prehistory)
            .field("terminal", &self.terminal)
            .finish_non_exhaustive()
    }
}

/// Per-index quantities reused by every residual computation.
struct Sample {
    partials: SlotPartials,
    g: Vec<f64>,
    jac: DynamicsJacobians,
}

impl ControlProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid,
        n: usize,
        m: usize,
        alpha0: usize,
        prehistory: Vec<Vec<f64>>,
        terminal: Vec<f64>,
        lagrangian: Arc<dyn Lagrangian>,
        dynamics: Arc<dyn Dynamics>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::ShapeMismatch("state and control dimensions must be positive".into()));
        }
        if dynamics.state_dim() != n {
            return Err(Error::ShapeMismatch(format!(
                "dynamics has {} components, state has {n}",
                dynamics.state_dim()
            )));
        }
        check_geometry(&grid, alpha0, 1)?;
        if prehistory.len() != alpha0 + 1 {
            return Err(Error::ShapeMismatch(format!(
                "prehistory needs {} rows, got {}",
                alpha0 + 1,
                prehistory.len()
            )));
        }
        if terminal.len() != n {
            return Err(Error::ShapeMismatch(format!("terminal value has {} components, expected {n}", terminal.len())));
        }
        let prehistory = flatten_rows(&prehistory, n, "prehistory")?;
        Ok(Self { grid, n, m, alpha0, prehistory, terminal, lagrangian, dynamics })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_prehistory_fn(
        grid: Grid,
        n: usize,
        m: usize,
        alpha0: usize,
        phi: impl Fn(f64) -> Vec<f64>,
        terminal: Vec<f64>,
        lagrangian: Arc<dyn Lagrangian>,
        dynamics: Arc<dyn Dynamics>,
    ) -> Result<Self> {
        let rows = (0..=alpha0.min(grid.last())).map(|j| phi(grid.point(j))).collect();
        Self::new(grid, n, m, alpha0, rows, terminal, lagrangian, dynamics)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn alpha0(&self) -> usize {
        self.alpha0
    }

    pub fn a_index(&self) -> usize {
        self.alpha0
    }

    pub fn prehistory_row(&self, j: usize) -> &[f64] {
        &self.prehistory[j * self.n..(j + 1) * self.n]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn lagrangian(&self) -> &Arc<dyn Lagrangian> {
        &self.lagrangian
    }

    pub fn dynamics(&self) -> &Arc<dyn Dynamics> {
        &self.dynamics
    }

    /// Number of `u`/`lambda` rows, `N - A`.
    pub fn control_rows(&self) -> usize {
        self.grid.last() - self.alpha0
    }

    /// Line from `y_A` to `c`, zero control and multiplier.
    pub fn initial_guess(&self) -> ControlState {
        let (a, last, n) = (self.alpha0, self.grid.last(), self.n);
        let mut y = Trajectory::zeros(n, last + 1);
        for j in 0..=a {
            y.row_mut(j).copy_from_slice(self.prehistory_row(j));
        }
        let start = self.prehistory_row(a).to_vec();
        for j in a + 1..=last {
            let s = (j - a) as f64 / (last - a) as f64;
            for (c, v) in y.row_mut(j).iter_mut().enumerate() {
                *v = start[c] + s * (self.terminal[c] - start[c]);
            }
        }
        ControlState {
            y,
            u: Trajectory::zeros(self.m, self.control_rows()),
            lambda: Trajectory::zeros(n, self.control_rows()),
        }
    }

    pub fn check_shape(&self, s: &ControlState) -> Result<()> {
        let rows = self.control_rows();
        if s.y.n() != self.n || s.y.rows() != self.grid.len() {
            return Err(Error::ShapeMismatch("state trajectory does not match the grid".into()));
        }
        if s.u.n() != self.m || s.u.rows() != rows {
            return Err(Error::ShapeMismatch(format!("control needs {rows} rows of {} components", self.m)));
        }
        if s.lambda.n() != self.n || s.lambda.rows() != rows {
            return Err(Error::ShapeMismatch(format!("multiplier needs {rows} rows of {} components", self.n)));
        }
        Ok(())
    }

    fn u_at<'s>(&self, s: &'s ControlState, j: usize) -> &'s [f64] {
        s.u.row(j - self.alpha0)
    }

    fn lambda_at<'s>(&self, s: &'s ControlState, j: usize) -> &'s [f64] {
        s.lambda.row(j - self.alpha0)
    }

    fn slots(&self, s: &ControlState, i: usize) -> [Vec<f64>; 4] {
        delayed_slots(&self.grid, self.alpha0, &s.y, i, Some(self.u_at(s, i - 1)))
    }

    fn samples(&self, s: &ControlState) -> Vec<Sample> {
        (self.alpha0 + 1..=self.grid.last())
            .map(|i| {
                let x = self.grid.point(i);
                let sl = self.slots(s, i);
                let partials = self.lagrangian.partials(x, [&sl[0], &sl[1], &sl[2], &sl[3]]);
                let (y, u) = (s.y.row(i - 1), self.u_at(s, i - 1));
                Sample { partials, g: self.dynamics.value(x, y, u), jac: self.dynamics.jacobians(x, y, u) }
            })
            .collect()
    }

    /// Raw performance index `J(y, u)`.
    pub fn performance_index(&self, s: &ControlState) -> Result<f64> {
        self.check_shape(s)?;
        let mut total = 0.0;
        for i in self.alpha0 + 1..=self.grid.last() {
            let sl = self.slots(s, i);
            let l = self.lagrangian.value(self.grid.point(i), [&sl[0], &sl[1], &sl[2], &sl[3]]);
            if !l.is_finite() {
                return Err(Error::NonFiniteLagrangian { index: i });
            }
            total += self.grid.nu(i) * l;
        }
        Ok(total)
    }

    /// Modified index `sum nu_i [L + lambda_{i-1} . (nabla y - G)]`.
    pub fn augmented_index(&self, s: &ControlState) -> Result<f64> {
        let mut total = self.performance_index(s)?;
        for i in self.alpha0 + 1..=self.grid.last() {
            let nu = self.grid.nu(i);
            let g = self.dynamics.value(self.grid.point(i), s.y.row(i - 1), self.u_at(s, i - 1));
            let lambda = self.lambda_at(s, i - 1);
            for c in 0..self.n {
                let dy = (s.y.row(i)[c] - s.y.row(i - 1)[c]) / nu;
                total += nu * lambda[c] * (dy - g[c]);
            }
        }
        Ok(total)
    }

    /// Gradient of the modified index split into `(y, u, lambda)` parts.
    /// `y` covers all grid rows; `u` and `lambda` cover `A..=N-1`.
    fn gradient_parts(&self, s: &ControlState, table: &[Sample]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (a, n, m, last) = (self.alpha0, self.n, self.m, self.grid.last());
        let mut gy = vec![0.0; (last + 1) * n];
        let mut gu = vec![0.0; self.control_rows() * m];
        let mut gl = vec![0.0; self.control_rows() * n];
        for i in a + 1..=last {
            let smp = &table[i - a - 1];
            let p = &smp.partials;
            let nu = self.grid.nu(i);
            let ratio = nu / self.grid.nu(i - a);
            let lambda = self.lambda_at(s, i - 1);
            let gy_lambda = smp.jac.dy_transpose_mul(lambda);
            let gu_lambda = smp.jac.du_transpose_mul(lambda);
            for c in 0..n {
                gy[(i - 1) * n + c] += nu * (p[0][c] - gy_lambda[c]) - lambda[c];
                gy[i * n + c] += lambda[c];
                gy[(i - a - 1) * n + c] += nu * p[2][c] - ratio * p[3][c];
                gy[(i - a) * n + c] += ratio * p[3][c];
                let dy = (s.y.row(i)[c] - s.y.row(i - 1)[c]) / nu;
                gl[(i - 1 - a) * n + c] = nu * (dy - smp.g[c]);
            }
            for k in 0..m {
                gu[(i - 1 - a) * m + k] = nu * (p[1][k] - gu_lambda[k]);
            }
        }
        (gy, gu, gl)
    }

    fn block_len(&self, j: usize) -> usize {
        if j == self.alpha0 {
            self.m + self.n
        } else {
            2 * self.n + self.m
        }
    }

    /// Unknowns ordered by grid index: `[u_A, l_A, y_{A+1}, u_{A+1}, l_{A+1}, ...]`.
    pub fn pack(&self, s: &ControlState) -> Vec<f64> {
        let mut z = Vec::new();
        for j in self.alpha0..self.grid.last() {
            if j > self.alpha0 {
                z.extend_from_slice(s.y.row(j));
            }
            z.extend_from_slice(self.u_at(s, j));
            z.extend_from_slice(self.lambda_at(s, j));
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> ControlState {
        let mut s = self.initial_guess();
        let mut at = 0;
        let (a, n, m) = (self.alpha0, self.n, self.m);
        for j in a..self.grid.last() {
            if j > a {
                s.y.row_mut(j).copy_from_slice(&z[at..at + n]);
                at += n;
            }
            s.u.row_mut(j - a).copy_from_slice(&z[at..at + m]);
            at += m;
            s.lambda.row_mut(j - a).copy_from_slice(&z[at..at + n]);
            at += n;
        }
        s
    }

    fn pack_gradient(&self, gy: &[f64], gu: &[f64], gl: &[f64]) -> Vec<f64> {
        let (a, n, m) = (self.alpha0, self.n, self.m);
        let mut z = Vec::new();
        for j in a..self.grid.last() {
            if j > a {
                z.extend_from_slice(&gy[j * n..(j + 1) * n]);
            }
            z.extend_from_slice(&gu[(j - a) * m..(j - a + 1) * m]);
            z.extend_from_slice(&gl[(j - a) * n..(j - a + 1) * n]);
        }
        z
    }

    /// Gradient of the modified index with respect to all free unknowns,
    /// in [`pack`](Self::pack) order.
    pub fn stationarity(&self, s: &ControlState) -> Result<Vec<f64>> {
        self.check_shape(s)?;
        let table = self.samples(s);
        let (gy, gu, gl) = self.gradient_parts(s, &table);
        Ok(self.pack_gradient(&gy, &gu, &gl))
    }

    pub fn oc_residuals(&self, s: &ControlState) -> Result<ControlResidualReport> {
        self.check_shape(s)?;
        let (a, n, m, last) = (self.alpha0, self.n, self.m, self.grid.last());
        let q_inv = self.grid.spec().q().powi(-(a as i32));
        let table = self.samples(s);
        let at = |i: usize| &table[i - a - 1];
        let lam = |j: usize| self.lambda_at(s, j);

        let adjoint_core = |i: usize| -> Vec<f64> {
            let nu = self.grid.nu(i);
            let gyl = at(i).jac.dy_transpose_mul(lam(i - 1));
            (0..n)
                .map(|c| (lam(i - 1)[c] - lam(i - 2)[c]) / nu + gyl[c] - at(i).partials[0][c])
                .collect()
        };

        let (mut d_idx, mut d_val) = (Vec::new(), Vec::new());
        for i in a + 2..=last - a {
            let nu = self.grid.nu(i);
            let mut r = adjoint_core(i);
            for (c, v) in r.iter_mut().enumerate() {
                *v += q_inv * (at(i + a).partials[3][c] - at(i + a - 1).partials[3][c]) / nu
                    - q_inv * at(i + a).partials[2][c];
            }
            d_idx.push(i);
            d_val.push(r);
        }

        let (mut t_idx, mut t_val) = (Vec::new(), Vec::new());
        for i in (last - a + 1).max(a + 2)..=last {
            t_idx.push(i);
            t_val.push(adjoint_core(i));
        }

        let (mut c_idx, mut c_val, mut dyn_val) = (Vec::new(), Vec::new(), Vec::new());
        for i in a + 1..=last {
            let smp = at(i);
            let gul = smp.jac.du_transpose_mul(lam(i - 1));
            c_idx.push(i);
            c_val.push((0..m).map(|k| gul[k] - smp.partials[1][k]).collect());
            let nu = self.grid.nu(i);
            dyn_val.push(
                (0..n)
                    .map(|c| (s.y.row(i)[c] - s.y.row(i - 1)[c]) / nu - smp.g[c])
                    .collect::<Vec<_>>(),
            );
        }

        let boundary = if a == 0 { vec![0.0; n] } else { at(last).partials[3].clone() };

        let (gy, gu, gl) = self.gradient_parts(s, &table);
        let packed = self.pack_gradient(&gy, &gu, &gl);
        let mut s_idx = Vec::new();
        let mut s_val = Vec::new();
        let mut offset = 0;
        for j in a..last {
            let len = self.block_len(j);
            s_idx.push(j);
            s_val.push(packed[offset..offset + len].to_vec());
            offset += len;
        }

        Ok(ControlResidualReport {
            adjoint_delayed: ResidualGroup::new(d_idx, d_val),
            adjoint_tail: ResidualGroup::new(t_idx, t_val),
            control: ResidualGroup::new(c_idx.clone(), c_val),
            boundary: ResidualGroup::new(vec![last], vec![boundary]),
            dynamics: ResidualGroup::new(c_idx, dyn_val),
            stationarity: ResidualGroup::new(s_idx, s_val),
        })
    }
}

struct OcSystem<'p> {
    problem: &'p ControlProblem,
}

impl StationarySystem for OcSystem<'_> {
    fn dim(&self) -> usize {
        let p = self.problem;
        (p.grid.last() - p.alpha0) * (p.m + p.n) + (p.grid.last() - p.alpha0 - 1) * p.n
    }

    fn half_bandwidth(&self) -> usize {
        let p = self.problem;
        (p.alpha0 + 2) * (2 * p.n + p.m) - 1
    }

    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let p = self.problem;
        let s = p.unpack(z);
        let table = p.samples(&s);
        let (gy, gu, gl) = p.gradient_parts(&s, &table);
        let g = p.pack_gradient(&gy, &gu, &gl);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLagrangian { index: 0 });
        }
        Ok(g)
    }
}

#[derive(Clone, Debug)]
pub struct ControlSolution {
    pub state: ControlState,
    pub report: ControlResidualReport,
    pub iterations: usize,
    pub stationarity_norm: f64,
}

/// Newton iteration on the stationarity system of the modified index with
/// respect to `(y, u, lambda)`.
pub fn solve_oc(problem: &ControlProblem, init: &ControlState, opts: &SolverOptions) -> Result<ControlSolution> {
    problem.check_shape(init)?;
    let system = OcSystem { problem };
    let out = newton::solve(&system, &problem.pack(init), opts)?;
    let state = problem.unpack(&out.z);
    let report = problem.oc_residuals(&state)?;
    Ok(ControlSolution { state, report, iterations: out.iterations, stationarity_norm: out.residual_norm })
}
