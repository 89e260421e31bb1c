//! TOML problem configs.
//!
//! ```toml
//! lagrangian = "0.5*Dy1^2 - 0.5*yd1^2"
//! prehistory = ["1"]          # one expression in x per component,
//!                             # or explicit rows [[1.0], [1.0], ...]
//! endpoint = [0.0]
//!
//! [timescale]
//! q = 1.0
//! h = 1.0
//! [grid]
//! b = 12.0
//! steps = 14
//! [delay]
//! alpha0 = 2
//! [state]
//! n = 1
//! [control]                   # optional; turns the problem into a control problem
//! m = 1
//! dynamics = ["-r*y1 + u1"]
//! [params]
//! r = 1.0
//! [solver]
//! tol = 1e-10
//! max_iter = 100
//! ```
//!
//! Alternatively `[catalog]` with `name` and `[catalog.params]` replaces
//! every problem field; `[solver]` may still be given.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::functions::{Dynamics, Lagrangian, Slots};
use crate::newton::SolverOptions;
use crate::optimal_control::ControlProblem;
use crate::problems::{self, CatalogParams, CatalogProblem};
use crate::timescale::{Grid, TimeScaleSpec};
use crate::variational::VariationalProblem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeScaleConfig {
    pub q: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub b: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub alpha0: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub m: usize,
    pub dynamics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrehistoryConfig {
    Expressions(Vec<String>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    pub name: String,
    #[serde(default)]
    pub params: CatalogParams,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lagrangian: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prehistory: Option<PrehistoryConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timescale: Option<TimeScaleConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<StateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog: Option<CatalogConfig>,
}

fn missing(what: &str) -> Error {
    Error::Config(format!("missing [{what}]"))
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_exclusive()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_exclusive(&self) -> Result<()> {
        match (&self.catalog, &self.lagrangian) {
            (Some(_), Some(_)) => Err(Error::Config("give either 'lagrangian' or [catalog], not both".into())),
            (None, None) => Err(Error::Config("give either 'lagrangian' or [catalog]".into())),
            (Some(c), None) => {
                let stray = [
                    ("prehistory", self.prehistory.is_some()),
                    ("endpoint", self.endpoint.is_some()),
                    ("timescale", self.timescale.is_some()),
                    ("grid", self.grid.is_some()),
                    ("delay", self.delay.is_some()),
                    ("state", self.state.is_some()),
                    ("control", self.control.is_some()),
                    ("params", self.params.is_some()),
                ];
                match stray.iter().find(|s| s.1) {
                    Some((key, _)) => Err(Error::Config(format!(
                        "'{key}' cannot be combined with [catalog]; set catalog '{}' parameters in [catalog.params]",
                        c.name
                    ))),
                    None => Ok(()),
                }
            }
            (None, Some(_)) => Ok(()),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        self.solver.unwrap_or_default()
    }

    fn param_names(&self) -> Vec<String> {
        self.params.iter().flat_map(|p| p.keys().cloned()).collect()
    }

    fn param_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.values().copied()).collect()
    }

    pub fn build(&self) -> Result<CatalogProblem> {
        if let Some(c) = &self.catalog {
            return problems::build(&c.name, &c.params);
        }
        let ts = self.timescale.as_ref().ok_or_else(|| missing("timescale"))?;
        let g = self.grid.as_ref().ok_or_else(|| missing("grid"))?;
        let n = self.state.as_ref().ok_or_else(|| missing("state"))?.n;
        let alpha0 = self.delay.as_ref().map_or(0, |d| d.alpha0);
        let grid = Grid::build(TimeScaleSpec::new(ts.q, ts.h)?, g.b, g.steps)?;
        if alpha0 >= g.steps {
            return Err(Error::BadRange(format!(
                "delay exceeds grid: alpha0={alpha0} with {} steps",
                g.steps
            )));
        }
        let endpoint = self.endpoint.clone().ok_or_else(|| Error::Config("missing 'endpoint'".into()))?;
        let rows = self.prehistory_rows(&grid, n, alpha0)?;
        let names = self.param_names();
        let source = self.lagrangian.as_deref().unwrap_or_default();

        match &self.control {
            None => {
                let env = Env::problem(n, 0, &names);
                let l = ExprLagrangian { expr: Expr::parse(source, &env)?, control: false, params: self.param_values() };
                Ok(CatalogProblem::Variational(VariationalProblem::new(grid, n, alpha0, rows, endpoint, Arc::new(l))?))
            }
            Some(c) => {
                if c.dynamics.len() != n {
                    return Err(Error::Config(format!("[control] dynamics needs {n} expressions, got {}", c.dynamics.len())));
                }
                let env = control_env(n, c.m, &names);
                let l = ExprLagrangian { expr: Expr::parse(source, &env)?, control: true, params: self.param_values() };
                let denv = dynamics_env(n, c.m, &names);
                let exprs = c.dynamics.iter().map(|s| Expr::parse(s, &denv)).collect::<Result<Vec<_>, _>>()?;
                let d = ExprDynamics { exprs, params: self.param_values() };
                Ok(CatalogProblem::Control(ControlProblem::new(
                    grid,
                    n,
                    c.m,
                    alpha0,
                    rows,
                    endpoint,
                    Arc::new(l),
                    Arc::new(d),
                )?))
            }
        }
    }

    fn prehistory_rows(&self, grid: &Grid, n: usize, alpha0: usize) -> Result<Vec<Vec<f64>>> {
        match &self.prehistory {
            None => Err(Error::Config("missing 'prehistory'".into())),
            Some(PrehistoryConfig::Rows(rows)) => Ok(rows.clone()),
            Some(PrehistoryConfig::Expressions(src)) => {
                if src.len() != n {
                    return Err(Error::Config(format!("prehistory needs {n} expressions, got {}", src.len())));
                }
                let mut names = vec!["x".to_string()];
                names.extend(self.param_names());
                let env = Env::with_names(&names);
                let exprs = src.iter().map(|s| Expr::parse(s, &env)).collect::<Result<Vec<_>, _>>()?;
                let mut vars = vec![0.0];
                vars.extend(self.param_values());
                (0..=alpha0.min(grid.last()))
                    .map(|j| {
                        vars[0] = grid.point(j);
                        exprs.iter().map(|e| Ok(e.eval(&vars)?)).collect()
                    })
                    .collect()
            }
        }
    }
}

/// `x, y1..yn, yd1..ydn, Dyd1..Dydn, u1..um`, then parameters.
fn control_env(n: usize, m: usize, params: &[String]) -> Env {
    let mut env = Env::new();
    env.declare("x");
    for prefix in ["y", "yd", "Dyd"] {
        for k in 1..=n {
            env.declare(&format!("{prefix}{k}"));
        }
    }
    for k in 1..=m {
        env.declare(&format!("u{k}"));
    }
    for p in params {
        env.declare(p);
    }
    env
}

/// `x, y1..yn, u1..um`, then parameters.
fn dynamics_env(n: usize, m: usize, params: &[String]) -> Env {
    let mut env = Env::new();
    env.declare("x");
    for k in 1..=n {
        env.declare(&format!("y{k}"));
    }
    for k in 1..=m {
        env.declare(&format!("u{k}"));
    }
    for p in params {
        env.declare(p);
    }
    env
}

/// Lagrangian from an expression; domain errors evaluate to NaN.
struct ExprLagrangian {
    expr: Expr,
    control: bool,
    params: Vec<f64>,
}

impl Lagrangian for ExprLagrangian {
    fn value(&self, x: f64, a: Slots<'_>) -> f64 {
        let mut vars = Vec::with_capacity(1 + 4 * a[0].len() + self.params.len());
        vars.push(x);
        vars.extend_from_slice(a[0]);
        if !self.control {
            vars.extend_from_slice(a[1]);
        }
        vars.extend_from_slice(a[2]);
        vars.extend_from_slice(a[3]);
        if self.control {
            vars.extend_from_slice(a[1]);
        }
        vars.extend_from_slice(&self.params);
        self.expr.eval(&vars).unwrap_or(f64::NAN)
    }
}

struct ExprDynamics {
    exprs: Vec<Expr>,
    params: Vec<f64>,
}

impl Dynamics for ExprDynamics {
    fn state_dim(&self) -> usize {
        self.exprs.len()
    }

    fn value(&self, x: f64, y: &[f64], u: &[f64]) -> Vec<f64> {
        let mut vars = Vec::with_capacity(1 + y.len() + u.len() + self.params.len());
        vars.push(x);
        vars.extend_from_slice(y);
        vars.extend_from_slice(u);
        vars.extend_from_slice(&self.params);
        self.exprs.iter().map(|e| e.eval(&vars).unwrap_or(f64::NAN)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXPLICIT: &str = r#"
lagrangian = "0.5*Dy1^2 - k*yd1^2"
prehistory = ["1 + x"]
endpoint = [0.0]

[timescale]
q = 1.0
h = 1.0
[grid]
b = 6.0
steps = 8
[delay]
alpha0 = 2
[state]
n = 1
[params]
k = 0.25
"#;

    #[test]
    fn explicit_config_builds() {
        let cfg = ProblemConfig::parse(EXPLICIT).unwrap();
        let CatalogProblem::Variational(p) = cfg.build().unwrap() else { panic!("expected variational") };
        assert_eq!(p.prehistory_row(0), &[-1.0]);
        assert_eq!(p.prehistory_row(2), &[1.0]);
        let v = p.lagrangian().value(0.0, [&[0.0], &[2.0], &[2.0], &[0.0]]);
        assert_eq!(v, 2.0 - 1.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = EXPLICIT.replace("[state]\nn = 1", "[state]\nn = 1\nm = 2");
        assert!(matches!(ProblemConfig::parse(&text), Err(Error::Config(_))));
        let text = format!("extra = 1\n{EXPLICIT}");
        assert!(ProblemConfig::parse(&text).is_err());
    }

    #[test]
    fn exactly_one_source() {
        let both = format!("{EXPLICIT}\n[catalog]\nname = \"quantum_lq\"\n");
        assert!(ProblemConfig::parse(&both).is_err());
        assert!(ProblemConfig::parse("[solver]\ntol = 1e-9\n").is_err());
        let mixed = "[catalog]\nname = \"quantum_lq\"\n[grid]\nb = 1.0\nsteps = 3\n";
        assert!(ProblemConfig::parse(mixed).is_err());
    }

    #[test]
    fn catalog_config() {
        let cfg = ProblemConfig::parse("[catalog]\nname = \"quantum_lq\"\n[catalog.params]\nalpha0 = 0\nr = 2\n").unwrap();
        assert!(matches!(cfg.build().unwrap(), CatalogProblem::Control(_)));
    }

    #[test]
    fn control_config_variables() {
        let text = r#"
lagrangian = "0.5*(yd1^2 + u1^2)"
prehistory = [[1.0], [1.0]]
endpoint = [0.0]
[timescale]
q = 0.5
h = 0.0
[grid]
b = 1.0
steps = 6
[delay]
alpha0 = 1
[state]
n = 1
[control]
m = 1
dynamics = ["-r*y1 + u1"]
[params]
r = 1.0
"#;
        let cfg = ProblemConfig::parse(text).unwrap();
        let CatalogProblem::Control(p) = cfg.build().unwrap() else { panic!("expected control") };
        assert_eq!(p.dynamics().value(0.0, &[2.0], &[3.0]), vec![1.0]);
        assert_eq!(p.lagrangian().value(0.0, [&[9.0], &[3.0], &[1.0], &[7.0]]), 5.0);
        let bad = text.replace("0.5*(yd1^2 + u1^2)", "0.5*Dy1^2");
        assert!(matches!(ProblemConfig::parse(&bad).unwrap().build(), Err(Error::Parse(_))));
    }

    #[test]
    fn delay_exceeding_grid() {
        let text = EXPLICIT.replace("alpha0 = 2", "alpha0 = 8");
        let err = ProblemConfig::parse(&text).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("delay exceeds grid"));
    }
}
