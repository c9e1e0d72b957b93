//! User-supplied coefficients and costs as arithmetic expressions in `x`,
//! `y` and `z`, parsed by `meval`. Functions: exp, ln, sqrt, abs, sin, cos,
//! tanh; constants pi and e. The typographic operators `×`, `÷` and
//! `−` are accepted as `*`, `/` and `-`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Z,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
        }
    }
}

/// Functions and constants available to expressions. Stateless, so bound
/// closures stay `Send + Sync`.
#[derive(Clone, Copy)]
struct Builtins;

impl meval::ContextProvider for Builtins {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, meval::FuncEvalError> {
        let f: fn(f64) -> f64 = match name {
            "exp" => f64::exp,
            "ln" => f64::ln,
            "sqrt" => f64::sqrt,
            "abs" => f64::abs,
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tanh" => f64::tanh,
            _ => return Err(meval::FuncEvalError::UnknownFunction),
        };
        match args {
            [a] => Ok(f(*a)),
            _ => Err(meval::FuncEvalError::NumberArgs(1)),
        }
    }
}

type Eval = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A parsed expression. Immutable and thread-safe.
#[derive(Clone)]
pub struct Expr {
    source: String,
    f: Eval,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Expr").field(&self.source).finish()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    /// Parses `src`, accepting only the listed variables.
    pub fn parse(src: &str, vars: &[Var]) -> Result<Self> {
        let normalized: String = src
            .chars()
            .map(|c| match c {
                '×' => '*',
                '÷' => '/',
                '−' => '-',
                c => c,
            })
            .collect();
        if normalized.trim().is_empty() {
            return Err(Error::Expr("empty expression".into()));
        }
        let e: meval::Expr = normalized.parse().map_err(|err| Error::Expr(format!("'{src}': {err}")))?;
        let bad = |err: meval::Error| Error::Expr(format!("'{src}': {err}"));
        let f: Eval = match vars {
            [] => {
                let v = e.eval_with_context(Builtins).map_err(bad)?;
                Arc::new(move |_, _, _| v)
            }
            [a] => {
                let g = e.bind_with_context(Builtins, a.name()).map_err(bad)?;
                let a = *a;
                Arc::new(move |x, y, z| g(pick(a, x, y, z)))
            }
            [a, b] => {
                let g = e.bind2_with_context(Builtins, a.name(), b.name()).map_err(bad)?;
                let (a, b) = (*a, *b);
                Arc::new(move |x, y, z| g(pick(a, x, y, z), pick(b, x, y, z)))
            }
            _ => {
                let g = e.bind3_with_context(Builtins, "x", "y", "z").map_err(bad)?;
                Arc::new(move |x, y, z| g(x, y, z))
            }
        };
        Ok(Self { source: src.to_string(), f })
    }

    pub fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        (self.f)(x, y, z)
    }

    pub fn eval_x(&self, x: f64) -> f64 {
        self.eval(x, 0.0, 0.0)
    }

    pub fn eval_yz(&self, y: f64, z: f64) -> f64 {
        self.eval(0.0, y, z)
    }
}

fn pick(v: Var, x: f64, y: f64, z: f64) -> f64 {
    match v {
        Var::X => x,
        Var::Y => y,
        Var::Z => z,
    }
}
