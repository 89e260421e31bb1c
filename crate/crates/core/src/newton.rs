//! Damped Newton iteration for square stationarity systems with banded
//! Jacobians.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BandedMatrix;

/// Relative step for the finite-difference Jacobian.
const JAC_REL_STEP: f64 = 1e-5;

/// Levenberg-Marquardt shift, relative to the largest diagonal entry of
/// `J^T J`, used when the Jacobian is singular.
const LM_REL_SHIFT: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Target for the sup-norm of the stationarity residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried when a full step increases the residual.
    pub max_halvings: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, max_halvings: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub z: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
}

/// A square nonlinear system `F(z) = 0` whose Jacobian entry `(i, j)`
/// vanishes whenever `|i - j| > half_bandwidth()`.
pub trait StationarySystem {
    fn dim(&self) -> usize;
    fn half_bandwidth(&self) -> usize;
    fn residual(&self, z: &[f64]) -> Result<Vec<f64>>;
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference Jacobian. Columns further apart than twice the
/// bandwidth are perturbed together, so the cost is `2 (2 bw + 1)`
/// residual evaluations regardless of the dimension.
pub fn fd_jacobian<S: StationarySystem + ?Sized>(sys: &S, z: &[f64]) -> Result<BandedMatrix> {
    let n = sys.dim();
    let bw = sys.half_bandwidth().min(n.saturating_sub(1));
    let stride = 2 * bw + 1;
    let mut jac = BandedMatrix::zeros(n, bw, bw);
    let steps: Vec<f64> = z
        .iter()
        .map(|&v| ((v + JAC_REL_STEP * v.abs().max(1.0)) - v).abs())
        .collect();
    let mut probe = z.to_vec();
    for group in 0..stride.min(n) {
        let cols: Vec<usize> = (group..n).step_by(stride).collect();
        for &c in &cols {
            probe[c] = z[c] + steps[c];
        }
        let plus = sys.residual(&probe)?;
        for &c in &cols {
            probe[c] = z[c] - steps[c];
        }
        let minus = sys.residual(&probe)?;
        for &c in &cols {
            probe[c] = z[c];
        }
        for &c in &cols {
            let lo = c.saturating_sub(bw);
            let hi = (c + bw).min(n - 1);
            for row in lo..=hi {
                jac.set(row, c, (plus[row] - minus[row]) / (2.0 * steps[c]));
            }
        }
    }
    Ok(jac)
}

/// Step minimizing `|J d - rhs|^2 + mu |d|^2`; on a consistent singular
/// system repeated steps converge to a solution.
fn regularized_step(jac: &BandedMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = jac.dim();
    let plain = jac.normal_matrix(0.0);
    let scale = (0..n).map(|i| plain.get(i, i)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::SingularSystem { pivot: 0 });
    }
    jac.normal_matrix(LM_REL_SHIFT * scale).solve(&jac.transpose_mul(rhs))
}

pub fn solve<S: StationarySystem + ?Sized>(sys: &S, z0: &[f64], opts: &SolverOptions) -> Result<NewtonOutcome> {
    let mut z = z0.to_vec();
    let mut f = sys.residual(&z)?;
    let mut iterations = 0;
    loop {
        let norm = sup_norm(&f);
        if !norm.is_finite() {
            return Err(Error::NoConvergence { iterations, residual: norm, last: z });
        }
        if norm <= opts.tol {
            return Ok(NewtonOutcome { z, iterations, residual_norm: norm });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: norm, last: z });
        }
        iterations += 1;

        let jac = fd_jacobian(sys, &z)?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = match jac.clone().solve(&rhs) {
            Ok(s) => s,
            Err(Error::SingularSystem { .. }) => regularized_step(&jac, &rhs)?,
            Err(e) => return Err(e),
        };

        let current = two_norm(&f);
        let mut scale = 1.0;
        let mut trial_z: Vec<f64>;
        let mut trial_f: Vec<f64>;
        let mut halvings = 0;
        loop {
            trial_z = z.iter().zip(&step).map(|(a, d)| a + scale * d).collect();
            trial_f = match sys.residual(&trial_z) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => v,
                Ok(_) | Err(Error::NonFiniteLagrangian { .. }) | Err(Error::Eval(_)) => {
                    vec![f64::INFINITY; f.len()]
                }
                Err(e) => return Err(e),
            };
            if two_norm(&trial_f) <= current || halvings >= opts.max_halvings {
                break;
            }
            halvings += 1;
            scale *= 0.5;
        }
        if !trial_f.iter().all(|x| x.is_finite()) {
            return Err(Error::NoConvergence { iterations, residual: f64::INFINITY, last: z });
        }
        z = trial_z;
        f = trial_f;
    }
}
