//! Built-in problems and the continuum-limit sweep.
//!
//! | name             | kind        | time scale        |
//! |------------------|-------------|-------------------|
//! | `discrete_action`| variational | `q = 1`, step `h` |
//! | `quantum_action` | variational | `h = 0`           |
//! | `mixed_delay`    | variational | general `(q, h)`  |
//! | `quantum_lq`     | control     | `h = 0`           |

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::functions::{fd_derivative, Dynamics, DynamicsJacobians, FnDynamics, FnLagrangian, Lagrangian};
use crate::newton::SolverOptions;
use crate::optimal_control::{solve_oc, ControlProblem};
use crate::timescale::{Grid, TimeScaleSpec};
use crate::variational::{solve_el, Trajectory, VariationalProblem};

/// A catalog parameter as written in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_string())
    }
}

pub type CatalogParams = BTreeMap<String, ParamValue>;

#[derive(Clone, Copy, Debug)]
pub struct ParamDoc {
    pub name: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [ParamDoc],
}

const ACTION_POTENTIAL: ParamDoc = ParamDoc {
    name: "potential",
    default: "0.5*w^2",
    doc: "potential V(w) as an expression in w; \"harmonic\" and \"zero\" use exact derivatives",
};
const PHI: ParamDoc = ParamDoc { name: "phi", default: "1", doc: "prehistory: a number or an expression in x" };
const ENDPOINT: ParamDoc = ParamDoc { name: "c", default: "0", doc: "value at b" };

static CATALOG: [CatalogEntry; 4] = [
    CatalogEntry {
        name: "discrete_action",
        summary: "L = (Dy)^2/2 - V(y delayed) on the grid h*Z between a*h and b*h, delay d steps",
        params: &[
            ParamDoc { name: "a", default: "0", doc: "integer, left end a*h" },
            ParamDoc { name: "b", default: "12", doc: "integer, right end b*h; needs a < b - d" },
            ParamDoc { name: "d", default: "2", doc: "delay in steps" },
            ParamDoc { name: "h", default: "1", doc: "step, positive" },
            ACTION_POTENTIAL,
            PHI,
            ENDPOINT,
        ],
    },
    CatalogEntry {
        name: "quantum_action",
        summary: "L = (Dy)^2/2 - V(y delayed) on the q-grid between q^(alpha+1) and q^beta",
        params: &[
            ParamDoc { name: "q", default: "0.5", doc: "in (0, 1)" },
            ParamDoc { name: "alpha0", default: "1", doc: "delay in steps" },
            ParamDoc { name: "alpha", default: "5", doc: "a = q^(alpha+1)" },
            ParamDoc { name: "beta", default: "0", doc: "b = q^beta; needs alpha0 + beta < alpha + 1" },
            ACTION_POTENTIAL,
            PHI,
            ENDPOINT,
        ],
    },
    CatalogEntry {
        name: "mixed_delay",
        summary: "two-component problem using all four Lagrangian arguments on a general grid",
        params: &[
            ParamDoc { name: "q", default: "0.8", doc: "in (0, 1]" },
            ParamDoc { name: "h", default: "0.1", doc: "non-negative" },
            ParamDoc { name: "b", default: "2", doc: "right end" },
            ParamDoc { name: "steps", default: "12", doc: "grid steps" },
            ParamDoc { name: "alpha0", default: "2", doc: "delay in steps" },
            ParamDoc { name: "coupling", default: "0.3", doc: "weight of the delayed terms" },
        ],
    },
    CatalogEntry {
        name: "quantum_lq",
        summary: "minimize (1/2) sum nu [y(delayed)^2 + u^2] subject to nabla y = -r y^rho + u^rho on a q-grid",
        params: &[
            ParamDoc { name: "q", default: "0.5", doc: "in (0, 1)" },
            ParamDoc { name: "r", default: "1", doc: "decay rate, positive" },
            ParamDoc { name: "alpha0", default: "1", doc: "delay in steps" },
            ParamDoc { name: "alpha", default: "5", doc: "a = q^(alpha+1)" },
            ParamDoc { name: "beta", default: "0", doc: "b = q^beta; needs alpha0 + beta < alpha + 1" },
            PHI,
            ENDPOINT,
        ],
    },
];

pub fn catalog() -> &'static [CatalogEntry] {
    &CATALOG
}

pub fn entry(name: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.name == name)
}

#[derive(Clone, Debug)]
pub enum CatalogProblem {
    Variational(VariationalProblem),
    Control(ControlProblem),
}

impl CatalogProblem {
    pub fn grid(&self) -> &Grid {
        match self {
            CatalogProblem::Variational(p) => p.grid(),
            CatalogProblem::Control(p) => p.grid(),
        }
    }

    /// Solves from the default initial guess and returns the state.
    pub fn solve_state(&self, opts: &SolverOptions) -> Result<(Trajectory, usize)> {
        match self {
            CatalogProblem::Variational(p) => {
                let s = solve_el(p, &p.initial_guess(), opts)?;
                Ok((s.trajectory, s.iterations))
            }
            CatalogProblem::Control(p) => {
                let s = solve_oc(p, &p.initial_guess(), opts)?;
                Ok((s.state.y, s.iterations))
            }
        }
    }
}

/// Builds a catalog problem. Unknown names and parameters are rejected.
pub fn build(name: &str, params: &CatalogParams) -> Result<CatalogProblem> {
    let entry = entry(name).ok_or_else(|| Error::Config(format!("unknown catalog entry '{name}'")))?;
    let known: BTreeSet<&str> = entry.params.iter().map(|p| p.name).collect();
    if let Some(bad) = params.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::Config(format!("catalog entry '{name}' has no parameter '{bad}'")));
    }
    let p = Params(params);
    match name {
        "discrete_action" => {
            let potential = p.potential()?;
            Ok(CatalogProblem::Variational(discrete_action(
                p.int("a", 0)?,
                p.int("b", 12)?,
                p.count("d", 2)?,
                p.real("h", 1.0)?,
                potential,
                p.prehistory()?,
                p.real("c", 0.0)?,
            )?))
        }
        "quantum_action" => Ok(CatalogProblem::Variational(quantum_action(
            p.real("q", 0.5)?,
            p.int("alpha", 5)?,
            p.int("beta", 0)?,
            p.count("alpha0", 1)?,
            p.potential()?,
            p.prehistory()?,
            p.real("c", 0.0)?,
        )?)),
        "mixed_delay" => Ok(CatalogProblem::Variational(mixed_delay(
            p.real("q", 0.8)?,
            p.real("h", 0.1)?,
            p.real("b", 2.0)?,
            p.count("steps", 12)?,
            p.count("alpha0", 2)?,
            p.real("coupling", 0.3)?,
        )?)),
        "quantum_lq" => Ok(CatalogProblem::Control(quantum_lq(
            p.real("q", 0.5)?,
            p.real("r", 1.0)?,
            p.count("alpha0", 1)?,
            p.int("alpha", 5)?,
            p.int("beta", 0)?,
            p.prehistory()?,
            p.real("c", 0.0)?,
        )?)),
        _ => unreachable!("entry lookup covers every name"),
    }
}

struct Params<'a>(&'a CatalogParams);

impl Params<'_> {
    fn real(&self, name: &str, default: f64) -> Result<f64> {
        match self.0.get(name) {
            None => Ok(default),
            Some(ParamValue::Number(v)) if v.is_finite() => Ok(*v),
            Some(other) => Err(Error::Config(format!("parameter '{name}' must be a finite number, got {other:?}"))),
        }
    }

    fn int(&self, name: &str, default: i64) -> Result<i64> {
        let v = self.real(name, default as f64)?;
        if v.fract() != 0.0 || v.abs() > 1e9 {
            return Err(Error::Config(format!("parameter '{name}' must be an integer, got {v}")));
        }
        Ok(v as i64)
    }

    fn count(&self, name: &str, default: usize) -> Result<usize> {
        let v = self.int(name, default as i64)?;
        usize::try_from(v).map_err(|_| Error::Config(format!("parameter '{name}' must be non-negative, got {v}")))
    }

    fn potential(&self) -> Result<Potential> {
        match self.0.get("potential") {
            None => Ok(Potential::harmonic()),
            Some(ParamValue::Text(s)) => Potential::from_source(s),
            Some(ParamValue::Number(v)) => Err(Error::Config(format!("potential must be an expression in w, got {v}"))),
        }
    }

    fn prehistory(&self) -> Result<Prehistory> {
        match self.0.get("phi") {
            None => Ok(Prehistory::Constant(1.0)),
            Some(ParamValue::Number(v)) => Ok(Prehistory::Constant(*v)),
            Some(ParamValue::Text(s)) => Ok(Prehistory::Expression(Arc::new(Expr::parse(s, &Env::with_names(&["x"]))?))),
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar potential `V(w)` with its derivative.
#[derive(Clone)]
pub struct Potential {
    value: ScalarFn,
    derivative: ScalarFn,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Potential")
    }
}

impl Potential {
    pub fn new(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), derivative: Arc::new(derivative) }
    }

    /// `V(w) = w^2 / 2`.
    pub fn harmonic() -> Self {
        Self::new(|w| 0.5 * w * w, |w| w)
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_| 0.0)
    }

    /// Parses an expression in `w`. The derivative is taken numerically;
    /// domain errors evaluate to NaN.
    pub fn from_source(source: &str) -> Result<Self> {
        match source.trim() {
            "harmonic" => return Ok(Self::harmonic()),
            "zero" => return Ok(Self::zero()),
            _ => {}
        }
        let e = Arc::new(Expr::parse(source, &Env::with_names(&["w"]))?);
        let e2 = Arc::clone(&e);
        let f = move |w: f64| e.eval(&[w]).unwrap_or(f64::NAN);
        Ok(Self::new(f, move |w| fd_derivative(|v| e2.eval(&[v]).unwrap_or(f64::NAN), w)))
    }

    pub fn value(&self, w: f64) -> f64 {
        (self.value)(w)
    }

    pub fn derivative(&self, w: f64) -> f64 {
        (self.derivative)(w)
    }
}

/// Prehistory data `phi`.
#[derive(Clone, Debug)]
pub enum Prehistory {
    Constant(f64),
    Expression(Arc<Expr>),
}

impl Prehistory {
    pub fn at(&self, x: f64) -> Result<f64> {
        match self {
            Prehistory::Constant(v) => Ok(*v),
            Prehistory::Expression(e) => Ok(e.eval(&[x])?),
        }
    }

    fn rows(&self, grid: &Grid, alpha0: usize) -> Result<Vec<Vec<f64>>> {
        (0..=alpha0).map(|j| Ok(vec![self.at(grid.point(j))?])).collect()
    }
}

/// `L = |v2|^2 / 2 - V(v3)`, scalar.
pub fn action_lagrangian(potential: Potential) -> Arc<dyn Lagrangian> {
    let v = potential.clone();
    Arc::new(
        FnLagrangian::new(move |_, a| 0.5 * a[1][0] * a[1][0] - v.value(a[2][0]))
            .with_partials(move |_, a| [vec![0.0], vec![a[1][0]], vec![-potential.derivative(a[2][0])], vec![0.0]]),
    )
}

/// Action on the grid `h Z` between `a h` and `b h` with delay `d` steps.
/// The prehistory occupies indices `a-d..=a`.
pub fn discrete_action(
    a: i64,
    b: i64,
    d: usize,
    h: f64,
    potential: Potential,
    phi: Prehistory,
    c: f64,
) -> Result<VariationalProblem> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::BadRange(format!("step h must be positive, got {h}")));
    }
    if a >= b - d as i64 {
        return Err(Error::BadRange(format!("need a < b - d, got a={a}, b={b}, d={d}")));
    }
    let steps = (b - a) as usize + d;
    let grid = Grid::build(TimeScaleSpec::discrete(h)?, b as f64 * h, steps)?;
    let rows = phi.rows(&grid, d)?;
    VariationalProblem::new(grid, 1, d, rows, vec![c], action_lagrangian(potential))
}

fn q_grid(q: f64, alpha: i64, beta: i64, alpha0: usize) -> Result<Grid> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::BadRange(format!("q must lie in (0, 1), got {q}")));
    }
    if alpha0 as i64 + beta > alpha {
        return Err(Error::BadRange(format!(
            "need alpha0 + beta < alpha + 1, got alpha0={alpha0}, alpha={alpha}, beta={beta}"
        )));
    }
    let steps = (alpha + 1 - beta) as usize + alpha0;
    Grid::build(TimeScaleSpec::quantum(q)?, q.powi(beta as i32), steps)
}

/// Action on the q-grid between `q^(alpha+1)` and `q^beta`.
pub fn quantum_action(
    q: f64,
    alpha: i64,
    beta: i64,
    alpha0: usize,
    potential: Potential,
    phi: Prehistory,
    c: f64,
) -> Result<VariationalProblem> {
    let grid = q_grid(q, alpha, beta, alpha0)?;
    let rows = phi.rows(&grid, alpha0)?;
    VariationalProblem::new(grid, 1, alpha0, rows, vec![c], action_lagrangian(potential))
}

/// Two-component problem with
/// `L = |v2|^2/2 + k |v4|^2/2 - |v3|^2/4 + k x v1_1 v3_2 + cos(v1_2) / 10`.
pub fn mixed_delay(q: f64, h: f64, b: f64, steps: usize, alpha0: usize, coupling: f64) -> Result<VariationalProblem> {
    let grid = Grid::build(TimeScaleSpec::new(q, h)?, b, steps)?;
    let k = coupling;
    let l = FnLagrangian::new(move |x, a| {
        let sq = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>();
        0.5 * sq(a[1]) + 0.5 * k * sq(a[3]) - 0.25 * sq(a[2]) + k * x * a[0][0] * a[2][1] + 0.1 * a[0][1].cos()
    });
    VariationalProblem::with_prehistory_fn(
        grid,
        2,
        alpha0,
        |x| vec![1.0 + x, x.cos()],
        vec![0.5, -0.5],
        Arc::new(l),
    )
}

/// Delayed linear-quadratic control on a q-grid:
/// `L = (v3^2 + u^2) / 2`, `G = -r y + u`.
pub fn quantum_lq(
    q: f64,
    r: f64,
    alpha0: usize,
    alpha: i64,
    beta: i64,
    phi: Prehistory,
    c: f64,
) -> Result<ControlProblem> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::BadRange(format!("r must be positive, got {r}")));
    }
    let grid = q_grid(q, alpha, beta, alpha0)?;
    let rows = phi.rows(&grid, alpha0)?;
    ControlProblem::new(grid, 1, 1, alpha0, rows, vec![c], lq_lagrangian(), lq_dynamics(r))
}

pub fn lq_lagrangian() -> Arc<dyn Lagrangian> {
    Arc::new(
        FnLagrangian::new(|_, a| 0.5 * (a[2][0] * a[2][0] + a[1][0] * a[1][0]))
            .with_partials(|_, a| [vec![0.0], vec![a[1][0]], vec![a[2][0]], vec![0.0]]),
    )
}

pub fn lq_dynamics(r: f64) -> Arc<dyn Dynamics> {
    Arc::new(
        FnDynamics::new(1, move |_, y, u| vec![-r * y[0] + u[0]])
            .with_jacobians(move |_, _, _| DynamicsJacobians { n: 1, m: 1, dy: vec![-r], du: vec![1.0] }),
    )
}

/// One refinement level of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Refinement {
    pub q: f64,
    pub h: f64,
    pub steps: usize,
}

/// A family of problems indexed by refinement, with a two-dimensional
/// continuum solution space.
pub trait Family: Sync {
    fn build(&self, level: &Refinement) -> Result<CatalogProblem>;

    /// Values of the two continuum basis functions at `x`.
    fn basis(&self, x: f64) -> [f64; 2];
}

/// `quantum_lq` without delay on the q-grid ending at `b`. Continuum
/// solutions are spanned by `exp(+-sqrt(r^2+1) x)`.
#[derive(Clone, Debug)]
pub struct QuantumLqFamily {
    pub r: f64,
    pub b: f64,
    pub phi: f64,
    pub c: f64,
}

impl Family for QuantumLqFamily {
    fn build(&self, level: &Refinement) -> Result<CatalogProblem> {
        if level.h != 0.0 {
            return Err(Error::BadRange("quantum_lq levels need h = 0".into()));
        }
        let grid = Grid::build(TimeScaleSpec::quantum(level.q)?, self.b, level.steps)?;
        let p = ControlProblem::new(
            grid,
            1,
            1,
            0,
            vec![vec![self.phi]],
            vec![self.c],
            lq_lagrangian(),
            lq_dynamics(self.r),
        )?;
        Ok(CatalogProblem::Control(p))
    }

    fn basis(&self, x: f64) -> [f64; 2] {
        let k = (self.r * self.r + 1.0).sqrt();
        [(k * x).exp(), (-k * x).exp()]
    }
}

/// Free particle (`V = 0`, no delay) between the first grid point and
/// `b`; continuum solutions are lines.
#[derive(Clone, Debug)]
pub struct FreeParticleFamily {
    pub b: f64,
    pub phi: f64,
    pub c: f64,
}

impl Family for FreeParticleFamily {
    fn build(&self, level: &Refinement) -> Result<CatalogProblem> {
        let grid = Grid::build(TimeScaleSpec::new(level.q, level.h)?, self.b, level.steps)?;
        let p = VariationalProblem::new(
            grid,
            1,
            0,
            vec![vec![self.phi]],
            vec![self.c],
            action_lagrangian(Potential::zero()),
        )?;
        Ok(CatalogProblem::Variational(p))
    }

    fn basis(&self, x: f64) -> [f64; 2] {
        [1.0, x]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "converging")]
    Converging,
    #[serde(rename = "not converging")]
    NotConverging,
    #[serde(rename = "insufficient levels")]
    InsufficientLevels,
    #[serde(rename = "exact")]
    Exact,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converging => "converging",
            Verdict::NotConverging => "not converging",
            Verdict::InsufficientLevels => "insufficient levels",
            Verdict::Exact => "exact",
        })
    }
}

/// Deviations at or below this count as zero.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepLevel {
    pub q: f64,
    pub h: f64,
    pub steps: usize,
    pub deviation: Option<f64>,
    pub coefficients: Option<[f64; 2]>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub levels: Vec<SweepLevel>,
    pub verdict: Verdict,
}

impl SweepReport {
    pub fn all_failed(&self) -> bool {
        !self.levels.is_empty() && self.levels.iter().all(|l| l.deviation.is_none())
    }
}

/// Linear interpolation of the first state component at `x`.
pub fn interpolate(grid: &Grid, y: &Trajectory, x: f64) -> Result<f64> {
    let pts = grid.points();
    let (lo, hi) = (pts[0], pts[pts.len() - 1]);
    let slack = 1e-12 * hi.abs().max(lo.abs()).max(1.0);
    if x < lo - slack || x > hi + slack {
        return Err(Error::BadRange(format!("probe {x} outside [{lo}, {hi}]")));
    }
    let j = pts.partition_point(|&t| t < x).clamp(1, pts.len() - 1);
    let (t0, t1) = (pts[j - 1], pts[j]);
    let s = ((x - t0) / (t1 - t0)).clamp(0.0, 1.0);
    Ok(y.row(j - 1)[0] + s * (y.row(j)[0] - y.row(j - 1)[0]))
}

fn sweep_level<F: Family + ?Sized>(
    family: &F,
    level: &Refinement,
    probes: &[f64],
    opts: &SolverOptions,
) -> Result<(f64, [f64; 2], usize)> {
    if probes.len() < 2 {
        return Err(Error::BadRange("need at least two probe points".into()));
    }
    let problem = family.build(level)?;
    let (y, iterations) = problem.solve_state(opts)?;
    let values = probes
        .iter()
        .map(|&x| interpolate(problem.grid(), &y, x))
        .collect::<Result<Vec<_>>>()?;
    let (x0, x1) = (probes[0], probes[probes.len() - 1]);
    let ([a, b], [c, d]) = (family.basis(x0), family.basis(x1));
    let det = a * d - b * c;
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularSystem { pivot: 0 });
    }
    let (v0, v1) = (values[0], values[values.len() - 1]);
    let coef = [(v0 * d - b * v1) / det, (a * v1 - c * v0) / det];
    let deviation = probes
        .iter()
        .zip(&values)
        .map(|(&x, v)| {
            let [f, g] = family.basis(x);
            (v - coef[0] * f - coef[1] * g).abs()
        })
        .fold(0.0, f64::max);
    Ok((deviation, coef, iterations))
}

fn verdict(deviations: &[f64]) -> Verdict {
    if deviations.len() < 2 {
        Verdict::InsufficientLevels
    } else if deviations.iter().all(|&d| d <= EXACT_TOL) {
        Verdict::Exact
    } else if deviations.windows(2).all(|w| w[1] < w[0]) {
        Verdict::Converging
    } else {
        Verdict::NotConverging
    }
}

/// Solves the family at every level (in parallel), fits the continuum
/// basis through the first and last probe and records the largest misfit
/// over all probes. Failed levels keep their error and are left out of the
/// verdict.
pub fn limit_sweep<F: Family + ?Sized>(
    family: &F,
    levels: &[Refinement],
    probes: &[f64],
    opts: &SolverOptions,
) -> SweepReport {
    let results: Vec<Result<(f64, [f64; 2], usize)>> = std::thread::scope(|s| {
        let handles: Vec<_> = levels
            .iter()
            .map(|level| s.spawn(move || sweep_level(family, level, probes, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("sweep level panicked".into()))))
            .collect()
    });
    let levels: Vec<SweepLevel> = levels
        .iter()
        .zip(results)
        .map(|(l, r)| {
            let mut out = SweepLevel {
                q: l.q,
                h: l.h,
                steps: l.steps,
                deviation: None,
                coefficients: None,
                iterations: None,
                error: None,
            };
            match r {
                Ok((dev, coef, it)) => {
                    out.deviation = Some(dev);
                    out.coefficients = Some(coef);
                    out.iterations = Some(it);
                }
                Err(e) => out.error = Some(e.to_string()),
            }
            out
        })
        .collect();
    let devs: Vec<f64> = levels.iter().filter_map(|l| l.deviation).collect();
    SweepReport { verdict: verdict(&devs), levels }
}

/// Levels `q = 1 - 2^-k` covering `[a, b]`, with `steps` rounded from
/// `ln(a/b) / ln q`.
pub fn q_refinements(a: f64, b: f64, ks: impl IntoIterator<Item = u32>) -> Vec<Refinement> {
    ks.into_iter()
        .map(|k| {
            let q = 1.0 - 0.5f64.powi(k as i32);
            Refinement { q, h: 0.0, steps: ((a / b).ln() / q.ln()).round() as usize }
        })
        .collect()
}
