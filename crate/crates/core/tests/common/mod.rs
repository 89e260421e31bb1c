#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsvar::{Grid, TimeScaleSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random grid with `q` in {1, 0.9, 0.5, 0.3}, `h` in {0, 0.1, 1} and
/// 5..=200 points. Grids with `h > 0` and `q < 1` stop where `q^steps`
/// reaches 1e-4, before the points crowd against `-h / (1 - q)`.
pub fn random_grid(rng: &mut ChaCha8Rng) -> Grid {
    let qs: [f64; 4] = [1.0, 0.9, 0.5, 0.3];
    let hs = [0.0, 0.1, 1.0];
    loop {
        let q = qs[rng.gen_range(0..qs.len())];
        let h = hs[rng.gen_range(0..hs.len())];
        if q == 1.0 && h == 0.0 {
            continue;
        }
        let mut steps = rng.gen_range(4..200usize);
        if q < 1.0 && h > 0.0 {
            let cap = (1e-4f64.ln() / q.ln()).floor() as usize;
            steps = steps.min(cap.max(4));
        }
        let b = rng.gen_range(0.5..5.0);
        if let Ok(g) = Grid::build(TimeScaleSpec::new(q, h).unwrap(), b, steps) {
            return g;
        }
    }
}

/// Smooth random function: a few sines plus a quadratic.
pub fn smooth_fn(rng: &mut ChaCha8Rng) -> impl Fn(f64) -> f64 {
    let terms: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0), rng.gen_range(0.0..6.3))).collect();
    let (c0, c1, c2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3));
    move |t| c0 + c1 * t + c2 * t * t + terms.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum::<f64>()
}

/// Quadratic model `f(z) = z^T H z / 2 + g^T z + c` recovered from values
/// only, then the stationary point `H z = -g` by a dense LU solve.
pub fn quadratic_stationary_point(f: impl Fn(&[f64]) -> f64, dim: usize, scale: f64) -> (Vec<f64>, DMatrix<f64>) {
    let e = |i: usize, s: f64| {
        let mut z = vec![0.0; dim];
        z[i] = s;
        z
    };
    let f0 = f(&vec![0.0; dim]);
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    for i in 0..dim {
        let (fp, fm) = (f(&e(i, scale)), f(&e(i, -scale)));
        g[i] = (fp - fm) / (2.0 * scale);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (scale * scale);
        for j in 0..i {
            let mut z = e(i, scale);
            z[j] = scale;
            let fij = f(&z);
            let v = (fij - fp - f(&e(j, scale)) + f0) / (scale * scale);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let z = h.clone().lu().solve(&(-g)).expect("quadratic model is singular");
    (z.iter().copied().collect(), h)
}

// ---- reference evaluator over the source text ----

pub struct RefEval<'a> {
    s: &'a [u8],
    pos: usize,
    vars: &'a HashMap<String, f64>,
}

#[derive(Debug, PartialEq)]
pub enum RefError {
    Syntax,
    Domain,
}

pub fn ref_eval(src: &str, vars: &HashMap<String, f64>) -> Result<f64, RefError> {
    let mut p = RefEval { s: src.as_bytes(), pos: 0, vars };
    let v = p.expr()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(RefError::Syntax);
    }
    Ok(v)
}

impl RefEval<'_> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<f64, RefError> {
        let mut v = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    v += self.term()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    v -= self.term()?;
                }
                _ => return Ok(v),
            }
        }
    }

    fn term(&mut self) -> Result<f64, RefError> {
        let mut v = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    v *= self.unary()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    let d = self.unary()?;
                    if d == 0.0 {
                        return Err(RefError::Domain);
                    }
                    v /= d;
                }
                _ => return Ok(v),
            }
        }
    }

    fn unary(&mut self) -> Result<f64, RefError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.unary()?;
            if base < 0.0 && e.fract() != 0.0 {
                return Err(RefError::Domain);
            }
            if base == 0.0 && e < 0.0 {
                return Err(RefError::Domain);
            }
            return Ok(base.powf(e));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<f64, RefError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(RefError::Syntax);
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len()
                    && (self.s[self.pos].is_ascii_digit()
                        || self.s[self.pos] == b'.'
                        || self.s[self.pos] == b'e'
                        || self.s[self.pos] == b'E'
                        || ((self.s[self.pos] == b'+' || self.s[self.pos] == b'-')
                            && matches!(self.s[self.pos - 1], b'e' | b'E')))
                {
                    self.pos += 1;
                }
                std::str::from_utf8(&self.s[start..self.pos])
                    .unwrap()
                    .parse::<f64>()
                    .map_err(|_| RefError::Syntax)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                let func: Option<fn(f64) -> Result<f64, RefError>> = match name {
                    "sin" => Some(|v| Ok(v.sin())),
                    "cos" => Some(|v| Ok(v.cos())),
                    "exp" => Some(|v| Ok(v.exp())),
                    "log" => Some(|v| if v <= 0.0 { Err(RefError::Domain) } else { Ok(v.ln()) }),
                    "sqrt" => Some(|v| if v < 0.0 { Err(RefError::Domain) } else { Ok(v.sqrt()) }),
                    "abs" => Some(|v| Ok(v.abs())),
                    _ => None,
                };
                match func {
                    Some(f) => {
                        if self.peek() != Some(b'(') {
                            return Err(RefError::Syntax);
                        }
                        self.pos += 1;
                        let v = self.expr()?;
                        if self.peek() != Some(b')') {
                            return Err(RefError::Syntax);
                        }
                        self.pos += 1;
                        f(v)
                    }
                    None => self.vars.get(name).copied().ok_or(RefError::Syntax),
                }
            }
            _ => Err(RefError::Syntax),
        }
    }
}

// ---- generators ----

pub const GEN_VARS: [&str; 4] = ["x", "y1", "Dy1", "k"];

pub fn gen_number(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..20).to_string(),
        1 => format!("{:.3}", rng.gen_range(0.0..10.0)),
        2 => format!("{}e{}", rng.gen_range(1..9), rng.gen_range(-3..3)),
        _ => format!(".{}", rng.gen_range(1..999)),
    }
}

/// Random well-formed expression over [`GEN_VARS`].
pub fn gen_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.5) {
            gen_number(rng)
        } else {
            GEN_VARS[rng.gen_range(0..GEN_VARS.len())].to_string()
        };
    }
    let sp = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.3) { " " } else { "" };
    match rng.gen_range(0..9) {
        0 => format!("{}{}+{}{}", gen_expr(rng, depth - 1), sp(rng), sp(rng), gen_expr(rng, depth - 1)),
        1 => format!("{} - {}", gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        2 => format!("{}*{}", gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        3 => format!("{}/{}", gen_expr(rng, depth - 1), gen_expr(rng, depth - 1)),
        4 => format!("({})^{}", gen_expr(rng, depth - 1), rng.gen_range(0..4)),
        5 => format!("-{}", gen_expr(rng, depth - 1)),
        6 => {
            let f = ["sin", "cos", "exp", "log", "sqrt", "abs"][rng.gen_range(0..6)];
            format!("{f}({})", gen_expr(rng, depth - 1))
        }
        7 => format!("({})", gen_expr(rng, depth - 1)),
        _ => format!("{}^{}^{}", gen_number(rng), rng.gen_range(0..3), gen_number(rng).len() % 3),
    }
}

/// Fuzz input: either raw random bytes (lossily decoded) or a jumble of
/// grammar tokens, at most `max_len` bytes.
pub fn fuzz_input(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    let s = if rng.gen_bool(0.4) {
        let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    } else {
        const TOKENS: [&str; 24] = [
            "(", ")", "+", "-", "*", "/", "^", " ", "x", "y1", "Dy1", "k", "sin(", "log(", "sqrt(", "1", "0", ".",
            "e", "2.5", "1e308", "9e999", "--", "abs",
        ];
        let mut out = String::new();
        while out.len() < len {
            out.push_str(TOKENS[rng.gen_range(0..TOKENS.len())]);
        }
        out
    };
    let mut end = s.len().min(max_len);
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    s[..end].to_string()
}
