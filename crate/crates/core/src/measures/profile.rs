use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::thermo::{Thermo, ThermoPoint};

/// How a [`SpatialProfile`] was declared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Constant,
    LinearX1,
    Expression,
}

#[derive(Clone, Debug)]
enum Repr {
    Constant(ThermoPoint),
    Linear { left: ThermoPoint, right: ThermoPoint },
    Expr(Vec<Expression>),
}

/// Map from macroscopic points `u in [0,1] x T^{d-1}` to `(rho, p)`.
#[derive(Clone, Debug)]
pub struct SpatialProfile {
    dim: usize,
    repr: Repr,
}

impl SpatialProfile {
    pub fn constant(dim: usize, value: ThermoPoint) -> Result<Self> {
        check_len(dim, &value.0)?;
        Ok(Self {
            dim,
            repr: Repr::Constant(value),
        })
    }

    /// Linear interpolation in `u_1` between `left` at `u_1 = 0` and `right`
    /// at `u_1 = 1`.
    pub fn linear_x1(dim: usize, left: ThermoPoint, right: ThermoPoint) -> Result<Self> {
        check_len(dim, &left.0)?;
        check_len(dim, &right.0)?;
        Ok(Self {
            dim,
            repr: Repr::Linear { left, right },
        })
    }

    /// One expression per component `rho, p_1, ..., p_d`.
    pub fn expression<S: AsRef<str>>(dim: usize, components: &[S]) -> Result<Self> {
        if components.len() != dim + 1 {
            return Err(Error::InvalidProfile(format!(
                "expected {} component expressions, got {}",
                dim + 1,
                components.len()
            )));
        }
        let exprs = components
            .iter()
            .map(|s| Expression::parse(s.as_ref(), dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            repr: Repr::Expr(exprs),
        })
    }

    pub fn kind(&self) -> ProfileKind {
        match self.repr {
            Repr::Constant(_) => ProfileKind::Constant,
            Repr::Linear { .. } => ProfileKind::LinearX1,
            Repr::Expr(_) => ProfileKind::Expression,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, u: &[f64]) -> ThermoPoint {
        match &self.repr {
            Repr::Constant(c) => c.clone(),
            Repr::Linear { left, right } => {
                let s = u[0];
                ThermoPoint(
                    left.0
                        .iter()
                        .zip(&right.0)
                        .map(|(a, b)| (1.0 - s) * a + s * b)
                        .collect(),
                )
            }
            Repr::Expr(es) => ThermoPoint(es.iter().map(|e| e.eval(u)).collect()),
        }
    }

    /// Regular validation grid: `points` values of `u_1` in `[0, 1]` and
    /// `points` values per transverse axis in `[0, 1)`.
    pub fn grid(dim: usize, points: usize) -> Vec<Vec<f64>> {
        let points = points.max(2);
        let n_t = points.pow(dim as u32 - 1);
        let mut out = Vec::with_capacity(points * n_t);
        for t in 0..n_t {
            let mut rest = t;
            let mut tr = Vec::with_capacity(dim - 1);
            for _ in 1..dim {
                tr.push((rest % points) as f64 / points as f64);
                rest /= points;
            }
            for i in 0..points {
                let mut u = vec![i as f64 / (points - 1) as f64];
                u.extend_from_slice(&tr);
                out.push(u);
            }
        }
        out
    }

    /// Check that the profile stays in the `eps`-interior of the domain on a
    /// validation grid.
    pub fn validate(&self, thermo: &Thermo, eps: f64) -> Result<()> {
        if thermo.dim() != self.dim {
            return Err(Error::InvalidProfile(format!(
                "profile dimension {} does not match velocity set dimension {}",
                self.dim,
                thermo.dim()
            )));
        }
        let points = match self.dim {
            1 => 65,
            2 => 33,
            _ => 9,
        };
        for u in Self::grid(self.dim, points) {
            let tp = self.eval(&u);
            let check = thermo.in_u(&tp);
            if check.margin < eps {
                return Err(Error::NotInDomain {
                    point: tp.0,
                    margin: check.margin,
                });
            }
        }
        Ok(())
    }

    /// Largest deviation between the profile trace at `u_1 = 0` (resp. 1)
    /// and the given wall values, over a transverse grid.
    pub fn trace_mismatch(
        &self,
        left: &dyn Fn(&[f64]) -> ThermoPoint,
        right: &dyn Fn(&[f64]) -> ThermoPoint,
    ) -> f64 {
        let mut worst = 0.0f64;
        for u in Self::grid(self.dim, 9) {
            let wall = if u[0] == 0.0 {
                left(&u[1..])
            } else if u[0] == 1.0 {
                right(&u[1..])
            } else {
                continue;
            };
            let val = self.eval(&u);
            for (a, b) in val.0.iter().zip(&wall.0) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

fn check_len(dim: usize, v: &[f64]) -> Result<()> {
    if v.len() != dim + 1 {
        return Err(Error::InvalidProfile(format!(
            "thermodynamic point has {} components, expected {}",
            v.len(),
            dim + 1
        )));
    }
    Ok(())
}
