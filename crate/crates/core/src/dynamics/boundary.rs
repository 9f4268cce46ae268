use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::model::VelocitySet;
use crate::thermo::{Thermo, ThermoPoint};

use super::lattice::{Lattice, Side};

/// Smallest distance of a reservoir density from 0 and 1.
pub const RESERVOIR_FLOOR: f64 = 1e-9;

/// Reservoir densities `alpha_v` (at `x_1 = 0`) and `beta_v` (at `x_1 = 1`).
///
/// Each density is an expression in `u1..ud`; `u1` is set to the wall
/// position so the transverse coordinates are `u2..ud`.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    dim: usize,
    alpha: Vec<Expression>,
    beta: Vec<Expression>,
}

impl BoundaryData {
    pub fn new(dim: usize, alpha: Vec<Expression>, beta: Vec<Expression>) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(Error::InvalidBoundary(format!(
                "alpha has {} entries, beta has {}",
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.iter().chain(&beta).any(|e| e.dim() != dim) {
            return Err(Error::InvalidBoundary("expression dimension mismatch".into()));
        }
        let this = Self { dim, alpha, beta };
        this.validate()?;
        Ok(this)
    }

    pub fn from_strings<S: AsRef<str>>(dim: usize, alpha: &[S], beta: &[S]) -> Result<Self> {
        let parse = |xs: &[S]| {
            xs.iter()
                .map(|s| Expression::parse(s.as_ref(), dim))
                .collect::<Result<Vec<_>>>()
        };
        Self::new(dim, parse(alpha)?, parse(beta)?)
    }

    /// Constant reservoirs.
    pub fn constant(dim: usize, alpha: &[f64], beta: &[f64]) -> Result<Self> {
        Self::new(
            dim,
            alpha.iter().map(|&a| Expression::constant(a, dim)).collect(),
            beta.iter().map(|&b| Expression::constant(b, dim)).collect(),
        )
    }

    /// Constant reservoirs in equilibrium with the thermodynamic points `a`
    /// (left) and `b` (right): `alpha_v = theta_v(Lambda(a))`.
    pub fn from_thermo(thermo: &Thermo, a: &ThermoPoint, b: &ThermoPoint) -> Result<Self> {
        let la = thermo.inverse_lambda(a)?;
        let lb = thermo.inverse_lambda(b)?;
        Self::constant(thermo.dim(), &thermo.thetas(&la), &thermo.thetas(&lb))
    }

    /// Both reservoirs at the same densities.
    pub fn uniform(dim: usize, theta: &[f64]) -> Result<Self> {
        Self::constant(dim, theta, theta)
    }

    fn validate(&self) -> Result<()> {
        let g: usize = if self.dim == 1 { 1 } else { 8 };
        let n_t = g.pow(self.dim as u32 - 1);
        for t in 0..n_t {
            let mut rest = t;
            let tr: Vec<f64> = (1..self.dim)
                .map(|_| {
                    let c = (rest % g) as f64 / g as f64;
                    rest /= g;
                    c
                })
                .collect();
            for side in [Side::Left, Side::Right] {
                for (v, x) in self.densities(side, &tr).into_iter().enumerate() {
                    if !(RESERVOIR_FLOOR..=1.0 - RESERVOIR_FLOOR).contains(&x) {
                        return Err(Error::InvalidBoundary(format!(
                            "{side:?} density for velocity {v} is {x} at {tr:?}; must lie strictly inside (0,1)"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_velocities(&self) -> usize {
        self.alpha.len()
    }

    pub fn expressions(&self, side: Side) -> &[Expression] {
        match side {
            Side::Left => &self.alpha,
            Side::Right => &self.beta,
        }
    }

    /// Densities per velocity at the transverse point `tr`.
    pub fn densities(&self, side: Side, tr: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(self.dim);
        u.push(match side {
            Side::Left => 0.0,
            Side::Right => 1.0,
        });
        u.extend_from_slice(tr);
        self.expressions(side).iter().map(|e| e.eval(&u)).collect()
    }

    /// Dirichlet value `a = sum_v alpha_v (1, v)` or `b = sum_v beta_v (1, v)`.
    pub fn wall_value(&self, vs: &VelocitySet, side: Side, tr: &[f64]) -> ThermoPoint {
        let dens = self.densities(side, tr);
        let mut out = vec![0.0; vs.dim() + 1];
        for (v, a) in dens.iter().enumerate() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += a * vs.extended(v, k);
            }
        }
        ThermoPoint(out)
    }

    /// Densities at every wall entry of the lattice, in the order of
    /// [`Lattice::wall_sites`].
    pub fn cache(&self, lattice: &Lattice) -> Vec<Vec<f64>> {
        lattice
            .wall_sites()
            .into_iter()
            .map(|(side, t, _)| self.densities(side, &lattice.transverse_point(t)))
            .collect()
    }

    /// Whether `alpha_v` and `beta_v` are the same constants, so that a single
    /// product measure is reversible for the boundary dynamics.
    pub fn is_equilibrium(&self) -> bool {
        let probe = [0.0, 0.37, 0.81];
        (0..self.alpha.len()).all(|v| {
            let base = self.alpha[v].eval(&vec![0.0; self.dim]);
            probe.iter().all(|&p| {
                let mut u = vec![p; self.dim];
                let a = self.alpha[v].eval(&u);
                u[0] = 1.0;
                let b = self.beta[v].eval(&u);
                (a - base).abs() < 1e-15 && (b - base).abs() < 1e-15
            })
        })
    }
}

/// `N^2 [alpha (1 - eta) + (1 - alpha) eta]` for a wall site with reservoir
/// density `density`.
#[inline]
pub fn flip_rate(n: usize, density: f64, occupied: bool) -> f64 {
    let nn = (n * n) as f64;
    nn * if occupied { 1.0 - density } else { density }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_rates() {
        assert_eq!(flip_rate(10, 0.5, true), 50.0);
        assert_eq!(flip_rate(10, 0.5, false), 50.0);
        assert!((flip_rate(10, 0.9, false) - 90.0).abs() < 1e-12);
        assert!((flip_rate(10, 0.9, true) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_reservoirs() {
        assert!(BoundaryData::constant(1, &[0.0, 0.5], &[0.5, 0.5]).is_err());
        assert!(BoundaryData::constant(1, &[0.5, 0.5], &[0.5, 1.0]).is_err());
        assert!(BoundaryData::from_strings(2, &["0.5 + 0.6*sin(2*pi*u2)"; 4], &["0.5"; 4]).is_err());
        assert!(BoundaryData::from_strings(2, &["0.5 + 0.3*sin(2*pi*u2)"; 4], &["0.5"; 4]).is_ok());
    }

    #[test]
    fn wall_values_and_equilibrium_flag() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let a = ThermoPoint::new(1.4, &[0.1]);
        let b = ThermoPoint::new(0.6, &[-0.05]);
        let bd = BoundaryData::from_thermo(&th, &a, &b).unwrap();
        let wa = bd.wall_value(&vs, Side::Left, &[]);
        let wb = bd.wall_value(&vs, Side::Right, &[]);
        for k in 0..2 {
            assert!((wa.0[k] - a.0[k]).abs() < 1e-10);
            assert!((wb.0[k] - b.0[k]).abs() < 1e-10);
        }
        assert!(!bd.is_equilibrium());
        assert!(BoundaryData::uniform(1, &[0.3, 0.6]).unwrap().is_equilibrium());
    }

    #[test]
    fn cache_follows_wall_order() {
        let bd = BoundaryData::from_strings(2, &["0.5 + 0.2*cos(2*pi*u2)"; 4], &["0.25"; 4]).unwrap();
        let lat = Lattice::new(4, 2).unwrap();
        let cache = bd.cache(&lat);
        assert_eq!(cache.len(), 8);
        assert!((cache[0][0] - 0.7).abs() < 1e-15);
        assert!((cache[2][0] - 0.3).abs() < 1e-15);
        assert_eq!(cache[5][3], 0.25);
    }
}
