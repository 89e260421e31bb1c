//! Time scales whose backward jump is affine, `rho(t) = q t - h`, and the
//! finite grids obtained by iterating that jump down from a right endpoint.
//!
//! With `0 < q <= 1`, `h >= 0` and `(q, h) != (1, 0)` every point is
//! isolated, so all calculus on these grids reduces to difference quotients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used by [`Grid::locate`].
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// The pair `(q, h)` defining `rho(t) = q t - h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScaleSpec {
    q: f64,
    h: f64,
}

impl TimeScaleSpec {
    pub fn new(q: f64, h: f64) -> Result<Self> {
        if !(q.is_finite() && h.is_finite()) {
            return Err(Error::DegenerateGrid(format!("non-finite q={q} or h={h}")));
        }
        if q <= 0.0 || q > 1.0 {
            return Err(Error::DegenerateGrid(format!("q={q} outside (0, 1]")));
        }
        if h < 0.0 {
            return Err(Error::DegenerateGrid(format!("h={h} is negative")));
        }
        if q == 1.0 && h == 0.0 {
            return Err(Error::DegenerateGrid(
                "q=1, h=0 makes every point dense".to_string(),
            ));
        }
        Ok(Self { q, h })
    }

    /// Difference calculus on `hZ`.
    pub fn discrete(h: f64) -> Result<Self> {
        Self::new(1.0, h)
    }

    /// Quantum calculus on `{q^k}`.
    pub fn quantum(q: f64) -> Result<Self> {
        Self::new(q, 0.0)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Backward jump `q t - h`.
    pub fn rho(&self, t: f64) -> f64 {
        self.q * t - self.h
    }

    /// Forward jump `(t + h) / q`, the inverse of [`rho`](Self::rho).
    pub fn sigma(&self, t: f64) -> f64 {
        (t + self.h) / self.q
    }

    /// Backward graininess `(1 - q) t + h`.
    pub fn nu(&self, t: f64) -> f64 {
        (1.0 - self.q) * t + self.h
    }

    /// `k`-fold composition of `rho`, evaluated by iteration.
    pub fn rho_iter(&self, t: f64, k: usize) -> f64 {
        (0..k).fold(t, |acc, _| self.rho(acc))
    }

    /// Closed form `q^k t - h (1 + q + ... + q^(k-1))`.
    pub fn rho_iter_closed(&self, t: f64, k: usize) -> f64 {
        let qk = self.q.powi(k as i32);
        let geometric = if self.q == 1.0 {
            k as f64
        } else {
            (1.0 - qk) / (1.0 - self.q)
        };
        qk * t - self.h * geometric
    }
}

/// Ascending chain `t_0 < t_1 < ... < t_N` with `t_N = b` and
/// `t_{j-1} = rho(t_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    spec: TimeScaleSpec,
    points: Vec<f64>,
    nu: Vec<f64>,
}

impl Grid {
    pub fn build(spec: TimeScaleSpec, b: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::DegenerateGrid("steps must be positive".to_string()));
        }
        if !b.is_finite() {
            return Err(Error::DegenerateGrid(format!("right endpoint b={b}")));
        }
        let mut points = Vec::with_capacity(steps + 1);
        let mut t = b;
        points.push(t);
        for _ in 0..steps {
            t = spec.rho(t);
            points.push(t);
        }
        points.reverse();

        let mut nu = Vec::with_capacity(points.len());
        nu.push(spec.nu(points[0]));
        for j in 1..points.len() {
            nu.push(points[j] - points[j - 1]);
        }
        if let Some(j) = nu.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::DegenerateGrid(format!(
                "graininess {} at t={} is not positive",
                nu[j], points[j]
            )));
        }
        Ok(Self { spec, points, nu })
    }

    pub fn spec(&self) -> &TimeScaleSpec {
        &self.spec
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, j: usize) -> f64 {
        self.points[j]
    }

    /// `t_j - t_{j-1}` for `j >= 1`; `nu(t_0)` from the formula at `j = 0`.
    pub fn nu(&self, j: usize) -> f64 {
        self.nu[j]
    }

    pub fn nus(&self) -> &[f64] {
        &self.nu
    }

    /// Index of the last point, `N`.
    pub fn last(&self) -> usize {
        self.points.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn locate(&self, t: f64) -> Result<usize> {
        let close = |j: usize| (t - self.points[j]).abs() <= MEMBERSHIP_TOL * self.points[j].abs().max(1.0);
        let idx = self.points.partition_point(|&p| p < t);
        [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter(|&j| j < self.points.len())
            .find(|&j| close(j))
            .ok_or(Error::NotAMember(t))
    }
}
