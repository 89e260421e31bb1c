use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate time scale: {0}")]
    DegenerateGrid(String),

    #[error("{0} is not a point of the grid")]
    NotAMember(f64),

    #[error("need at least 2 grid points, got {0}")]
    TooFewPoints(usize),

    #[error("delayed index {index} falls below the grid")]
    IndexUnderflow { index: i64 },

    #[error("bad range: {0}")]
    BadRange(String),

    #[error("grid functions live on different grids")]
    GridMismatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Lagrangian is not finite at grid index {index}")]
    NonFiniteLagrangian { index: usize },

    #[error("admissible variations vanish on the prehistory and at b; index {index} is nonzero")]
    BadVariation { index: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        /// Last iterate, so callers can still report partial data.
        last: Vec<f64>,
    },

    #[error("singular linear system at pivot {pivot}")]
    SingularSystem { pivot: usize },

    #[error("analytic partials disagree with finite differences (relative error {0:e})")]
    PartialsMismatch(f64),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("config: {0}")]
    Config(String),
}
