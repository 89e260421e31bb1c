mod common;

use proptest::prelude::*;
use rand::Rng;
use tsvar::optimal_control::{solve_oc, ControlProblem, ControlState};
use tsvar::problems::{self, Prehistory};
use tsvar::SolverOptions;

struct Lq {
    q: f64,
    r: f64,
    alpha0: usize,
    alpha: i64,
    beta: i64,
    phi: f64,
    c: f64,
}

const EXAMPLE: Lq = Lq { q: 0.5, r: 1.0, alpha0: 1, alpha: 5, beta: 0, phi: 1.0, c: 0.0 };

impl Lq {
    fn problem(&self) -> ControlProblem {
        problems::quantum_lq(self.q, self.r, self.alpha0, self.alpha, self.beta, Prehistory::Constant(self.phi), self.c)
            .unwrap()
    }

    fn free_states(&self) -> usize {
        (self.alpha - self.beta) as usize
    }

    fn controls(&self) -> usize {
        (self.alpha - self.beta + 1) as usize
    }

    fn dim(&self) -> usize {
        self.free_states() + 2 * self.controls()
    }

    /// State at `q^e`.
    fn y(&self, w: &[f64], e: i64) -> f64 {
        if e == self.beta {
            self.c
        } else if e > self.alpha {
            self.phi
        } else {
            w[(e - self.beta - 1) as usize]
        }
    }

    /// Control and multiplier at `q^e`, `beta < e <= alpha + 1`.
    fn u(&self, w: &[f64], e: i64) -> f64 {
        w[self.free_states() + (e - self.beta - 1) as usize]
    }

    fn lambda(&self, w: &[f64], e: i64) -> f64 {
        w[self.free_states() + self.controls() + (e - self.beta - 1) as usize]
    }

    /// `sum_{k=beta}^{alpha} (1-q) q^k [ y(q^{k+a0+1})^2/2 + u(q^{k+1})^2/2
    ///  + lambda(q^{k+1}) (nabla_q y(q^k) + r y(q^{k+1}) - u(q^{k+1})) ]`.
    fn augmented(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in self.beta..=self.alpha {
            let step = (1.0 - self.q) * self.q.powi(k as i32);
            let yd = self.y(w, k + self.alpha0 as i64 + 1);
            let uk = self.u(w, k + 1);
            let dy = (self.y(w, k) - self.y(w, k + 1)) / step;
            let constraint = dy + self.r * self.y(w, k + 1) - uk;
            total += step * (0.5 * yd * yd + 0.5 * uk * uk + self.lambda(w, k + 1) * constraint);
        }
        total
    }

    /// Grid index of `q^e`.
    fn index(&self, p: &ControlProblem, e: i64) -> usize {
        p.grid().last() - (e - self.beta) as usize
    }

    fn to_state(&self, p: &ControlProblem, w: &[f64]) -> ControlState {
        let mut s = p.initial_guess();
        for e in self.beta + 1..=self.alpha {
            s.y.row_mut(self.index(p, e))[0] = self.y(w, e);
        }
        let a = p.a_index();
        for e in self.beta + 1..=self.alpha + 1 {
            let j = self.index(p, e) - a;
            s.u.row_mut(j)[0] = self.u(w, e);
            s.lambda.row_mut(j)[0] = self.lambda(w, e);
        }
        s
    }
}

fn random_state(p: &ControlProblem, rng: &mut impl Rng) -> ControlState {
    let mut s = p.initial_guess();
    for j in p.a_index() + 1..p.grid().last() {
        s.y.row_mut(j)[0] = rng.gen_range(-2.0..2.0);
    }
    for j in 0..p.control_rows() {
        s.u.row_mut(j)[0] = rng.gen_range(-2.0..2.0);
        s.lambda.row_mut(j)[0] = rng.gen_range(-2.0..2.0);
    }
    s
}

#[test]
fn augmented_index_matches_written_out_sum() {
    let mut rng = common::rng(17);
    for lq in [EXAMPLE, Lq { q: 0.8, r: 2.0, alpha0: 2, alpha: 7, beta: 1, phi: -0.5, c: 0.3 }] {
        let p = lq.problem();
        for _ in 0..10 {
            let w: Vec<f64> = (0..lq.dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let s = lq.to_state(&p, &w);
            let ours = p.augmented_index(&s).unwrap();
            let direct = lq.augmented(&w);
            assert!((ours - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{ours} vs {direct}");
        }
    }
}

#[test]
fn example_matches_dense_solution() {
    let lq = EXAMPLE;
    let p = lq.problem();
    assert_eq!(p.grid().len(), 8);
    let sol = solve_oc(&p, &p.initial_guess(), &SolverOptions::default()).unwrap();
    let (w, _) = common::quadratic_stationary_point(|w| lq.augmented(w), lq.dim(), 1.0);
    let oracle = lq.to_state(&p, &w);
    for (ours, dense) in [(&sol.state.y, &oracle.y), (&sol.state.u, &oracle.u), (&sol.state.lambda, &oracle.lambda)] {
        for (a, b) in ours.values().iter().zip(dense.values()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
    assert!(sol.report.max_condition_residual() <= 1e-10);
}

#[test]
fn example_satisfies_written_out_conditions() {
    let lq = EXAMPLE;
    let p = lq.problem();
    let s = solve_oc(&p, &p.initial_guess(), &SolverOptions::default()).unwrap().state;
    let (a, last) = (p.a_index(), p.grid().last());
    let g = p.grid();
    let y = |j: usize| s.y.row(j)[0];
    let u = |j: usize| s.u.row(j - a)[0];
    let lam = |j: usize| s.lambda.row(j - a)[0];
    let q_inv = lq.q.powi(-(lq.alpha0 as i32));
    // Delayed region: nabla(lambda o rho)(x) = r lambda(qx) + q^{-a0} y(qx).
    for i in a + 2..=last - lq.alpha0 {
        let d = (lam(i - 1) - lam(i - 2)) / g.nu(i);
        assert!((d - lq.r * lam(i - 1) - q_inv * y(i - 1)).abs() <= 1e-10, "i={i}");
    }
    // Tail: no state forcing.
    for i in last - lq.alpha0 + 1..=last {
        let d = (lam(i - 1) - lam(i - 2)) / g.nu(i);
        assert!((d - lq.r * lam(i - 1)).abs() <= 1e-10, "i={i}");
    }
    for j in a..last {
        assert!((lam(j) - u(j)).abs() <= 1e-10, "j={j}");
    }
    for i in a + 1..=last {
        let d = (y(i) - y(i - 1)) / g.nu(i);
        assert!((d + lq.r * y(i - 1) - u(i - 1)).abs() <= 1e-10, "i={i}");
    }
    let r = p.oc_residuals(&s).unwrap();
    assert_eq!(r.boundary.max, 0.0);
    assert!(r.adjoint_delayed.max <= 1e-10 && r.adjoint_tail.max <= 1e-10);
    assert!(r.control.max <= 1e-10 && r.dynamics.max <= 1e-10);
}

/// `(lhs, rhs_consistent, rhs_written, scale)` of the second-order
/// relation at grid index `i >= 2` for the undelayed problem. `scale` sums
/// the magnitudes of the terms that are combined.
fn second_order_terms(p: &ControlProblem, s: &ControlState, r: f64, i: usize) -> (f64, f64, f64, f64) {
    let g = p.grid();
    let q = g.spec().q();
    let y = |j: usize| s.y.row(j)[0];
    let d = |j: usize| (y(j) - y(j - 1)) / g.nu(j);
    let dd = (d(i) - d(i - 1)) / g.nu(i);
    let lhs = dd + r * q * d(i - 1);
    let consistent = r * d(i) + (r * r + 1.0) * y(i - 1);
    let scale = (d(i).abs() + d(i - 1).abs()) / g.nu(i)
        + r * q * d(i - 1).abs()
        + r * d(i).abs()
        + (r * r + 1.0) * y(i - 1).abs();
    (lhs, consistent, q * consistent, scale)
}

#[test]
fn undelayed_example_reduces_to_second_order_equation() {
    for (q, r) in [(0.5, 1.0), (0.8, 0.5), (0.95, 2.0)] {
        let lq = Lq { q, r, alpha0: 0, alpha: 9, beta: 0, phi: 1.0, c: 0.0 };
        let p = lq.problem();
        let s = solve_oc(&p, &p.initial_guess(), &SolverOptions::default()).unwrap().state;
        let (mut gap, mut size) = (0.0f64, 0.0f64);
        for i in 2..=p.grid().last() {
            let (lhs, consistent, written, scale) = second_order_terms(&p, &s, r, i);
            assert!((lhs - consistent).abs() <= 1e-8 * scale, "q={q} i={i}: {lhs} vs {consistent}");
            gap = gap.max((lhs - written).abs());
            size = size.max(consistent.abs());
        }
        let gap = gap / size;
        // The form with the extra factor q on the right differs by
        // (1 - q) times the right-hand side.
        assert!((gap - (1.0 - q)).abs() <= 1e-6, "q={q}: {gap}");
    }
}

#[test]
fn solve_from_solution_takes_no_steps() {
    let p = EXAMPLE.problem();
    let opts = SolverOptions::default();
    let sol = solve_oc(&p, &p.initial_guess(), &opts).unwrap();
    let again = solve_oc(&p, &sol.state, &opts).unwrap();
    assert_eq!(again.iterations, 0);
    assert_eq!(again.state, sol.state);
    let third = solve_oc(&p, &p.initial_guess(), &opts).unwrap();
    assert_eq!(third.state, sol.state);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stationarity_is_gradient_of_augmented_index(seed in any::<u64>(), alpha0 in 0usize..3, q in 0.3f64..0.9) {
        let mut rng = common::rng(seed);
        let lq = Lq { q, r: 1.3, alpha0, alpha: 6, beta: 0, phi: 0.7, c: -0.2 };
        let p = lq.problem();
        let s = random_state(&p, &mut rng);
        let grad = p.stationarity(&s).unwrap();
        let z = p.pack(&s);
        prop_assert_eq!(grad.len(), z.len());
        for k in 0..z.len() {
            let step = 1e-5;
            let at = |d: f64| {
                let mut w = z.clone();
                w[k] += d;
                p.augmented_index(&p.unpack(&w)).unwrap()
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            prop_assert!((fd - grad[k]).abs() <= 1e-6 * grad[k].abs().max(1.0), "k={}: {} vs {}", k, fd, grad[k]);
        }
    }

    #[test]
    fn multiplier_terms_vanish_on_feasible_states(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let p = EXAMPLE.problem();
        let mut s = random_state(&p, &mut rng);
        // Integrate the dynamics forward so the constraint holds exactly.
        let (a, last) = (p.a_index(), p.grid().last());
        for i in a + 1..=last {
            let nu = p.grid().nu(i);
            let prev = s.y.row(i - 1)[0];
            s.y.row_mut(i)[0] = prev + nu * (-EXAMPLE.r * prev + s.u.row(i - 1 - a)[0]);
        }
        let raw = p.performance_index(&s).unwrap();
        let aug = p.augmented_index(&s).unwrap();
        prop_assert!((raw - aug).abs() <= 1e-12 * raw.abs().max(1.0));
    }
}
