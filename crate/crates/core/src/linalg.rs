//! Banded Gaussian elimination with partial pivoting.

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest entry count as zero.
const SINGULAR_REL: f64 = 1e-14;

/// Square matrix with `kl` sub- and `ku` super-diagonals. Each row keeps
/// room for `kl` extra super-diagonals of pivoting fill-in.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let kl = kl.min(n.saturating_sub(1));
        let ku = ku.min(n.saturating_sub(1));
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        (off >= 0 && (off as usize) < self.width && i < self.n && j < self.n)
            .then(|| i * self.width + off as usize)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        let d = j as isize - i as isize;
        d >= -(self.kl as isize) && d <= self.ku as isize && i < self.n && j < self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let s = self.slot(i, j).unwrap();
        self.data[s] = v;
    }

    /// `A^T v`.
    pub fn transpose_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, vi) in v.iter().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n.saturating_sub(1));
            for (j, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *o += self.get(i, j) * vi;
            }
        }
        out
    }

    /// `A^T A + mu I`, banded with half-bandwidth `kl + ku`.
    pub fn normal_matrix(&self, mu: f64) -> BandedMatrix {
        let w = self.kl + self.ku;
        let mut out = BandedMatrix::zeros(self.n, w, w);
        for k in 0..self.n {
            let lo = k.saturating_sub(self.kl);
            let hi = (k + self.ku).min(self.n - 1);
            for i in lo..=hi {
                let a = self.get(k, i);
                if a == 0.0 {
                    continue;
                }
                for j in lo..=hi {
                    let s = out.slot(i, j).unwrap();
                    out.data[s] += a * self.get(k, j);
                }
            }
        }
        for i in 0..self.n {
            let s = out.slot(i, i).unwrap();
            out.data[s] += mu;
        }
        out
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(mut self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if n == 0 {
            return Ok(x);
        }
        if scale == 0.0 {
            return Err(Error::SingularSystem { pivot: 0 });
        }
        let upper = self.ku + self.kl;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let last_col = (k + upper).min(n - 1);
            let (p, pmax) = (k..=last_row)
                .map(|i| (i, self.get(i, k).abs()))
                .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
            if pmax <= SINGULAR_REL * scale {
                return Err(Error::SingularSystem { pivot: k });
            }
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.get(k, j), self.get(p, j));
                    let sk = self.slot(k, j).unwrap();
                    let sp = self.slot(p, j).unwrap();
                    self.data[sk] = b;
                    self.data[sp] = a;
                }
                x.swap(k, p);
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let si = self.slot(i, k).unwrap();
                let factor = self.data[si] / pivot;
                if factor == 0.0 {
                    continue;
                }
                self.data[si] = 0.0;
                for j in k + 1..=last_col {
                    let akj = self.get(k, j);
                    if akj != 0.0 {
                        let s = self.slot(i, j).unwrap();
                        self.data[s] -= factor * akj;
                    }
                }
                x[i] -= factor * x[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + upper).min(n - 1);
            let mut acc = x[k];
            for j in k + 1..=last_col {
                acc -= self.get(k, j) * x[j];
            }
            x[k] = acc / self.get(k, k);
        }
        Ok(x)
    }
}
