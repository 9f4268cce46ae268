//! Small arithmetic expressions over macroscopic coordinates, used for
//! profiles, reservoir densities and test functions in config files.

use std::fmt;
use std::str::FromStr;

use meval::{ContextProvider, FuncEvalError};

use crate::error::{Error, Result};

/// Parsed expression in the variables `u1..ud` (aliases `x`, `y`, `z`).
#[derive(Clone, PartialEq)]
pub struct Expression {
    source: String,
    expr: meval::Expr,
    dim: usize,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

struct Coords<'a>(&'a [f64]);

impl ContextProvider for Coords<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        let idx = match name {
            "pi" => return Some(std::f64::consts::PI),
            "e" => return Some(std::f64::consts::E),
            "x" => 0,
            "y" => 1,
            "z" => 2,
            _ => name.strip_prefix('u')?.parse::<usize>().ok()?.checked_sub(1)?,
        };
        self.0.get(idx).copied()
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, FuncEvalError> {
        let unary = |f: fn(f64) -> f64| match args {
            [a] => Ok(f(*a)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        };
        match name {
            "sqrt" => unary(f64::sqrt),
            "exp" => unary(f64::exp),
            "ln" => unary(f64::ln),
            "abs" => unary(f64::abs),
            "sin" => unary(f64::sin),
            "cos" => unary(f64::cos),
            "tan" => unary(f64::tan),
            "tanh" => unary(f64::tanh),
            "atan" => unary(f64::atan),
            "floor" => unary(f64::floor),
            "min" | "max" => {
                if args.is_empty() {
                    return Err(FuncEvalError::TooFewArguments);
                }
                let init = args[0];
                Ok(args[1..].iter().fold(init, |acc, &a| {
                    if name == "min" {
                        acc.min(a)
                    } else {
                        acc.max(a)
                    }
                }))
            }
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

impl Expression {
    /// Parse and check that every variable is one of `u1..u{dim}`.
    pub fn parse(source: &str, dim: usize) -> Result<Self> {
        let expr = meval::Expr::from_str(source).map_err(|e| Error::Expression {
            expr: source.to_string(),
            message: e.to_string(),
        })?;
        let this = Self {
            source: source.to_string(),
            expr,
            dim,
        };
        // A trial evaluation surfaces unknown variables and functions.
        let probe = vec![0.5; dim];
        this.expr
            .eval_with_context(Coords(&probe))
            .map_err(|e| Error::Expression {
                expr: source.to_string(),
                message: e.to_string(),
            })?;
        Ok(this)
    }

    pub fn constant(value: f64, dim: usize) -> Self {
        Self::parse(&format!("{value:e}"), dim).expect("float literal parses")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim);
        // Variables were checked at parse time; failures here can only come
        // from domain errors, which meval reports as NaN anyway.
        self.expr.eval_with_context(Coords(u)).unwrap_or(f64::NAN)
    }
}
