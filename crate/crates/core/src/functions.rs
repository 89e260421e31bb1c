//! Evaluation contracts for Lagrangians and control dynamics, with
//! finite-difference partials for implementations that provide none.

use std::fmt;

use crate::error::{Error, Result};

/// The four vector arguments of a delayed Lagrangian, in order.
///
/// For variational problems the slots are `y^rho(x)`, `nabla y(x)`,
/// `y^rho(rho^a(x))` and `nabla y(rho^a(x))`. Control problems put
/// `u^rho(x)` in the second slot.
pub type Slots<'a> = [&'a [f64]; 4];

/// Partial derivatives with respect to each slot.
pub type SlotPartials = [Vec<f64>; 4];

/// Relative step of the finite-difference stencil.
pub const FD_REL_STEP: f64 = 1e-3;

/// Tolerance when checking analytic partials against finite differences.
pub const PARTIALS_CHECK_TOL: f64 = 1e-4;

pub trait Lagrangian: Send + Sync {
    fn value(&self, x: f64, args: Slots<'_>) -> f64;

    fn partials(&self, x: f64, args: Slots<'_>) -> SlotPartials {
        fd_slot_partials(|x, a| self.value(x, a), x, args)
    }

    fn has_analytic_partials(&self) -> bool {
        false
    }
}

/// Control dynamics `nabla y = G(x, y^rho, u^rho)`.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn value(&self, x: f64, y: &[f64], u: &[f64]) -> Vec<f64>;

    fn jacobians(&self, x: f64, y: &[f64], u: &[f64]) -> DynamicsJacobians {
        fd_dynamics_jacobians(self, x, y, u)
    }

    fn has_analytic_jacobians(&self) -> bool {
        false
    }
}

/// Row-major `dG/dy` (n x n) and `dG/du` (n x m).
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsJacobians {
    pub n: usize,
    pub m: usize,
    pub dy: Vec<f64>,
    pub du: Vec<f64>,
}

impl DynamicsJacobians {
    /// `(dG/dy)^T lambda`.
    pub fn dy_transpose_mul(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|i| self.dy[i * self.n + k] * lambda[i]).sum())
            .collect()
    }

    /// `(dG/du)^T lambda`.
    pub fn du_transpose_mul(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|k| (0..self.n).map(|i| self.du[i * self.m + k] * lambda[i]).sum())
            .collect()
    }
}

/// Derivative of `f` at `v` by the five-point central stencil.
pub fn fd_derivative(f: impl Fn(f64) -> f64, v: f64) -> f64 {
    let h = ((v + FD_REL_STEP * v.abs().max(1.0)) - v).abs();
    let (f1, f_1) = (f(v + h), f(v - h));
    let (f2, f_2) = (f(v + 2.0 * h), f(v - 2.0 * h));
    (8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * h)
}

pub fn fd_slot_partials(f: impl Fn(f64, Slots<'_>) -> f64, x: f64, args: Slots<'_>) -> SlotPartials {
    let mut owned: [Vec<f64>; 4] = args.map(|s| s.to_vec());
    let mut out: SlotPartials = Default::default();
    for slot in 0..4 {
        let mut d = Vec::with_capacity(owned[slot].len());
        for k in 0..owned[slot].len() {
            let base = owned[slot][k];
            let mut probe = |v: f64| {
                owned[slot][k] = v;
                let view: Slots<'_> = [&owned[0], &owned[1], &owned[2], &owned[3]];
                f(x, view)
            };
            let h = ((base + FD_REL_STEP * base.abs().max(1.0)) - base).abs();
            let f1 = probe(base + h);
            let f_1 = probe(base - h);
            let f2 = probe(base + 2.0 * h);
            let f_2 = probe(base - 2.0 * h);
            owned[slot][k] = base;
            d.push((8.0 * (f1 - f_1) - (f2 - f_2)) / (12.0 * h));
        }
        out[slot] = d;
    }
    out
}

pub fn fd_dynamics_jacobians<D: Dynamics + ?Sized>(g: &D, x: f64, y: &[f64], u: &[f64]) -> DynamicsJacobians {
    let n = g.state_dim();
    let m = u.len();
    let mut dy = vec![0.0; n * n];
    let mut du = vec![0.0; n * m];
    let mut yv = y.to_vec();
    for k in 0..n {
        let col = fd_vector_column(|v| {
            yv[k] = v;
            g.value(x, &yv, u)
        }, y[k]);
        yv[k] = y[k];
        for i in 0..n {
            dy[i * n + k] = col[i];
        }
    }
    let mut uv = u.to_vec();
    for k in 0..m {
        let col = fd_vector_column(|v| {
            uv[k] = v;
            g.value(x, y, &uv)
        }, u[k]);
        uv[k] = u[k];
        for i in 0..n {
            du[i * m + k] = col[i];
        }
    }
    DynamicsJacobians { n, m, dy, du }
}

fn fd_vector_column(mut f: impl FnMut(f64) -> Vec<f64>, v: f64) -> Vec<f64> {
    let h = ((v + FD_REL_STEP * v.abs().max(1.0)) - v).abs();
    let f1 = f(v + h);
    let f_1 = f(v - h);
    let f2 = f(v + 2.0 * h);
    let f_2 = f(v - 2.0 * h);
    (0..f1.len())
        .map(|i| (8.0 * (f1[i] - f_1[i]) - (f2[i] - f_2[i])) / (12.0 * h))
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs()).max(1.0)
}

/// Compares a Lagrangian's partials against finite differences at one point.
/// Returns the worst relative discrepancy.
pub fn validate_partials<L: Lagrangian + ?Sized>(l: &L, x: f64, args: Slots<'_>) -> Result<f64> {
    let analytic = l.partials(x, args);
    let numeric = fd_slot_partials(|x, a| l.value(x, a), x, args);
    let worst = analytic
        .iter()
        .zip(&numeric)
        .flat_map(|(a, n)| a.iter().zip(n).map(|(&a, &n)| rel_err(a, n)))
        .fold(0.0, f64::max);
    if worst > PARTIALS_CHECK_TOL {
        Err(Error::PartialsMismatch(worst))
    } else {
        Ok(worst)
    }
}

pub fn validate_jacobians<D: Dynamics + ?Sized>(g: &D, x: f64, y: &[f64], u: &[f64]) -> Result<f64> {
    let analytic = g.jacobians(x, y, u);
    let numeric = fd_dynamics_jacobians(g, x, y, u);
    let worst = analytic
        .dy
        .iter()
        .zip(&numeric.dy)
        .chain(analytic.du.iter().zip(&numeric.du))
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max);
    if worst > PARTIALS_CHECK_TOL {
        Err(Error::PartialsMismatch(worst))
    } else {
        Ok(worst)
    }
}

type ValueFn = dyn Fn(f64, Slots<'_>) -> f64 + Send + Sync;
type PartialsFn = dyn Fn(f64, Slots<'_>) -> SlotPartials + Send + Sync;

/// A Lagrangian built from closures.
pub struct FnLagrangian {
    value: Box<ValueFn>,
    partials: Option<Box<PartialsFn>>,
}

impl FnLagrangian {
    pub fn new(value: impl Fn(f64, Slots<'_>) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Box::new(value), partials: None }
    }

    pub fn with_partials(mut self, partials: impl Fn(f64, Slots<'_>) -> SlotPartials + Send + Sync + 'static) -> Self {
        self.partials = Some(Box::new(partials));
        self
    }
}

impl fmt::Debug for FnLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnLagrangian")
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl Lagrangian for FnLagrangian {
    fn value(&self, x: f64, args: Slots<'_>) -> f64 {
        (self.value)(x, args)
    }

    fn partials(&self, x: f64, args: Slots<'_>) -> SlotPartials {
        match &self.partials {
            Some(p) => p(x, args),
            None => fd_slot_partials(|x, a| (self.value)(x, a), x, args),
        }
    }

    fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }
}

type DynValueFn = dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync;
type DynJacFn = dyn Fn(f64, &[f64], &[f64]) -> DynamicsJacobians + Send + Sync;

/// Control dynamics built from closures.
pub struct FnDynamics {
    n: usize,
    value: Box<DynValueFn>,
    jacobians: Option<Box<DynJacFn>>,
}

impl FnDynamics {
    pub fn new(n: usize, value: impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { n, value: Box::new(value), jacobians: None }
    }

    pub fn with_jacobians(
        mut self,
        jac: impl Fn(f64, &[f64], &[f64]) -> DynamicsJacobians + Send + Sync + 'static,
    ) -> Self {
        self.jacobians = Some(Box::new(jac));
        self
    }
}

impl fmt::Debug for FnDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnDynamics")
            .field("n", &self.n)
            .field("analytic_jacobians", &self.jacobians.is_some())
            .finish()
    }
}

impl Dynamics for FnDynamics {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: f64, y: &[f64], u: &[f64]) -> Vec<f64> {
        (self.value)(x, y, u)
    }

    fn jacobians(&self, x: f64, y: &[f64], u: &[f64]) -> DynamicsJacobians {
        match &self.jacobians {
            Some(j) => j(x, y, u),
            None => fd_dynamics_jacobians(self, x, y, u),
        }
    }

    fn has_analytic_jacobians(&self) -> bool {
        self.jacobians.is_some()
    }
}
