//! Equilibrium statics of the lattice gas: per-velocity densities, the
//! moment map from chemical potentials to `(rho, p)`, its Newton inverse,
//! and the domain of admissible `(rho, p)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{conserved_vector_bits, VelocitySet};

/// Points closer than this to the boundary of the domain are rejected.
pub const DEFAULT_MARGIN: f64 = 1e-9;
pub const NEWTON_TOLERANCE: f64 = 1e-12;
pub const NEWTON_MAX_STEPS: usize = 100;

/// `lambda = (lambda_0, lambda_1, ..., lambda_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChemicalPotential(pub Vec<f64>);

impl ChemicalPotential {
    pub fn zero(dim: usize) -> Self {
        Self(vec![0.0; dim + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Density and momentum density `(rho, p_1, ..., p_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoPoint(pub Vec<f64>);

impl ThermoPoint {
    pub fn new(rho: f64, momentum: &[f64]) -> Self {
        let mut v = Vec::with_capacity(momentum.len() + 1);
        v.push(rho);
        v.extend_from_slice(momentum);
        Self(v)
    }

    pub fn rho(&self) -> f64 {
        self.0[0]
    }

    pub fn momentum(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn component(&self, k: usize) -> f64 {
        self.0[k]
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mobility `a (1 - a)`.
#[inline]
pub fn chi(a: f64) -> f64 {
    a * (1.0 - a)
}

/// `theta_v(lambda)` for a velocity given by its float components.
pub fn theta(lambda: &ChemicalPotential, velocity: &[f64]) -> f64 {
    let l = &lambda.0;
    let mut s = l[0];
    for (lk, vk) in l[1..].iter().zip(velocity) {
        s += lk * vk;
    }
    logistic(s)
}

/// One face pair of the (zonotope) convex hull of attainable conserved
/// vectors: `lo <= n . x <= hi` with unit normal `n`.
#[derive(Clone, Debug)]
struct Slab {
    normal: Vec<f64>,
    lo: f64,
    hi: f64,
}

/// Result of a domain membership test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainCheck {
    pub inside: bool,
    /// Euclidean distance to the boundary, negative outside.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct Thermo {
    dim: usize,
    /// Extended velocities `(1, v)`, one row per velocity.
    tilde: Vec<Vec<f64>>,
    slabs: Vec<Slab>,
    barycenter: Vec<f64>,
    full_rank: bool,
}

impl Thermo {
    pub fn new(vs: &VelocitySet) -> Self {
        let dim = vs.dim();
        let big = dim + 1;
        let tilde: Vec<Vec<f64>> = (0..vs.len())
            .map(|v| (0..big).map(|k| vs.extended(v, k)).collect())
            .collect();
        let mut barycenter = vec![0.0; big];
        for row in &tilde {
            for k in 0..big {
                barycenter[k] += 0.5 * row[k];
            }
        }
        let full_rank = rank(&tilde, big) == big;
        let slabs = if full_rank {
            zonotope_slabs(&tilde, big)
        } else {
            Vec::new()
        };
        Self {
            dim,
            tilde,
            slabs,
            barycenter,
            full_rank,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_velocities(&self) -> usize {
        self.tilde.len()
    }

    /// `(1, v)` for velocity `v`.
    pub fn extended(&self, v: usize) -> &[f64] {
        &self.tilde[v]
    }

    /// The point `(|V|/2, 0, ..., 0)` reached at `lambda = 0`.
    pub fn barycenter(&self) -> ThermoPoint {
        ThermoPoint(self.barycenter.clone())
    }

    #[inline]
    fn linear_form(&self, lambda: &[f64], v: usize) -> f64 {
        self.tilde[v].iter().zip(lambda).map(|(a, b)| a * b).sum()
    }

    pub fn theta(&self, lambda: &ChemicalPotential, v: usize) -> f64 {
        logistic(self.linear_form(&lambda.0, v))
    }

    pub fn thetas(&self, lambda: &ChemicalPotential) -> Vec<f64> {
        (0..self.tilde.len())
            .map(|v| self.theta(lambda, v))
            .collect()
    }

    /// `log Z(lambda)` of the single-site product measure.
    pub fn log_partition(&self, lambda: &ChemicalPotential) -> f64 {
        (0..self.tilde.len())
            .map(|v| softplus(self.linear_form(&lambda.0, v)))
            .sum()
    }

    pub fn moments(&self, lambda: &ChemicalPotential) -> ThermoPoint {
        let big = self.dim + 1;
        let mut out = vec![0.0; big];
        for (v, row) in self.tilde.iter().enumerate() {
            let th = logistic(self.linear_form(&lambda.0, v));
            for k in 0..big {
                out[k] += row[k] * th;
            }
        }
        ThermoPoint(out)
    }

    /// Covariance matrix `sum_v (1,v)(1,v)^T chi(theta_v)`, which is the
    /// Jacobian of [`Thermo::moments`].
    pub fn jacobian(&self, lambda: &ChemicalPotential) -> DMatrix<f64> {
        let big = self.dim + 1;
        let mut j = DMatrix::zeros(big, big);
        for (v, row) in self.tilde.iter().enumerate() {
            let c = chi(logistic(self.linear_form(&lambda.0, v)));
            for a in 0..big {
                for b in 0..big {
                    j[(a, b)] += row[a] * row[b] * c;
                }
            }
        }
        j
    }

    /// Membership in the open domain with the distance to its boundary.
    pub fn in_u(&self, tp: &ThermoPoint) -> DomainCheck {
        if !self.full_rank || tp.0.len() != self.dim + 1 || tp.0.iter().any(|x| !x.is_finite())
        {
            return DomainCheck {
                inside: false,
                margin: f64::NEG_INFINITY,
            };
        }
        let margin = self
            .slabs
            .iter()
            .map(|s| {
                let p = dot(&s.normal, &tp.0);
                (p - s.lo).min(s.hi - p)
            })
            .fold(f64::INFINITY, f64::min);
        DomainCheck {
            inside: margin > 0.0,
            margin,
        }
    }

    /// Pull `tp` toward the barycenter until its margin is at least `eps`.
    /// Returns the (possibly unchanged) point and whether it moved.
    pub fn clamp_to_interior(&self, tp: &ThermoPoint, eps: f64) -> (ThermoPoint, bool) {
        if self.in_u(tp).margin >= eps {
            return (tp.clone(), false);
        }
        let c = &self.barycenter;
        let dir: Vec<f64> = tp.0.iter().zip(c).map(|(x, y)| x - y).collect();
        let mut s = 1.0f64;
        for slab in &self.slabs {
            let nc = dot(&slab.normal, c);
            let nd = dot(&slab.normal, &dir);
            if nd > 0.0 {
                s = s.min((slab.hi - eps - nc) / nd);
            } else if nd < 0.0 {
                s = s.min((slab.lo + eps - nc) / nd);
            }
        }
        let s = s.max(0.0) * (1.0 - 1e-12);
        let out = c.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
        (ThermoPoint(out), true)
    }

    /// Newton inversion of the moment map, started at `lambda = 0`.
    pub fn inverse_lambda(&self, tp: &ThermoPoint) -> Result<ChemicalPotential> {
        self.inverse_lambda_from(tp, &ChemicalPotential::zero(self.dim))
    }

    /// Newton inversion with a warm start, accurate to [`NEWTON_TOLERANCE`].
    pub fn inverse_lambda_from(
        &self,
        tp: &ThermoPoint,
        start: &ChemicalPotential,
    ) -> Result<ChemicalPotential> {
        let check = self.in_u(tp);
        if check.margin < DEFAULT_MARGIN {
            return Err(Error::NotInDomain {
                point: tp.0.clone(),
                margin: check.margin,
            });
        }
        let big = self.dim + 1;
        let target = &tp.0;
        let mut lambda = if start.0.len() == big && start.0.iter().all(|x| x.is_finite()) {
            start.clone()
        } else {
            ChemicalPotential::zero(self.dim)
        };
        // Convex objective whose gradient is moments - target.
        let objective =
            |l: &ChemicalPotential| self.log_partition(l) - dot(&l.0, target);
        let residual = |l: &ChemicalPotential| -> Vec<f64> {
            let m = self.moments(l);
            m.0.iter().zip(target).map(|(a, b)| a - b).collect()
        };
        let mut res = residual(&lambda);
        let mut res_norm = inf_norm(&res);
        let mut polish = 0;
        for _ in 0..NEWTON_MAX_STEPS {
            if res_norm <= NEWTON_TOLERANCE {
                polish += 1;
                if polish > 2 {
                    return Ok(lambda);
                }
            }
            let jac = self.jacobian(&lambda);
            let rhs = DVector::from_iterator(big, res.iter().map(|r| -r));
            let step = match jac.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => match jac.lu().solve(&rhs) {
                    Some(s) => s,
                    None => break,
                },
            };
            let f0 = objective(&lambda);
            let slope: f64 = step.iter().zip(&res).map(|(s, r)| s * r).sum();
            let mut t = 1.0;
            let mut accepted = None;
            while t > 1e-12 {
                let trial = ChemicalPotential(
                    lambda.0.iter().zip(step.iter()).map(|(l, s)| l + t * s).collect(),
                );
                let trial_res = residual(&trial);
                let trial_norm = inf_norm(&trial_res);
                let armijo = objective(&trial) <= f0 + 1e-4 * t * slope;
                if armijo || trial_norm < res_norm {
                    accepted = Some((trial, trial_res, trial_norm));
                    break;
                }
                t *= 0.5;
            }
            match accepted {
                Some((l, r, n)) => {
                    if res_norm <= NEWTON_TOLERANCE && n >= res_norm {
                        return Ok(lambda);
                    }
                    lambda = l;
                    res = r;
                    res_norm = n;
                }
                None => break,
            }
        }
        if res_norm <= NEWTON_TOLERANCE {
            Ok(lambda)
        } else {
            Err(Error::NoConvergence {
                iterations: NEWTON_MAX_STEPS,
                residual: res_norm,
            })
        }
    }

    /// `chi(theta_v(Lambda(tp)))`.
    pub fn flux_coefficient(&self, tp: &ThermoPoint, v: usize) -> Result<f64> {
        let lambda = self.inverse_lambda(tp)?;
        Ok(chi(self.theta(&lambda, v)))
    }

    /// Every attainable conserved vector `I(xi)`, one per local state.
    pub fn enumerate_vertices(vs: &VelocitySet) -> Vec<Vec<f64>> {
        assert!(vs.len() <= 24, "vertex enumeration limited to 24 velocities");
        (0u64..(1u64 << vs.len()))
            .map(|bits| conserved_vector_bits(bits, vs))
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn rank(rows: &[Vec<f64>], cols: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    m.rank(1e-10)
}

/// Facet slabs of the zonotope `sum_v [0, g_v]`: each facet normal is
/// orthogonal to `D - 1` linearly independent generators.
fn zonotope_slabs(gens: &[Vec<f64>], big: usize) -> Vec<Slab> {
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let n = gens.len();
    let mut idx: Vec<usize> = (0..big - 1).collect();
    if big - 1 > n {
        return Vec::new();
    }
    loop {
        if let Some(nrm) = orthogonal_complement(&idx.iter().map(|&i| &gens[i][..]).collect::<Vec<_>>(), big) {
            if !normals
                .iter()
                .any(|m| (dot(m, &nrm).abs() - 1.0).abs() < 1e-12)
            {
                normals.push(nrm);
            }
        }
        // next combination
        let k = big - 1;
        let mut i = k;
        loop {
            if i == 0 {
                return finish_slabs(normals, gens);
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn finish_slabs(normals: Vec<Vec<f64>>, gens: &[Vec<f64>]) -> Vec<Slab> {
    normals
        .into_iter()
        .map(|normal| {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for g in gens {
                let p = dot(&normal, g);
                if p > 0.0 {
                    hi += p;
                } else {
                    lo += p;
                }
            }
            Slab { normal, lo, hi }
        })
        .collect()
}

/// Unit vector orthogonal to `D - 1` vectors in `R^D`, if they are independent.
fn orthogonal_complement(vectors: &[&[f64]], big: usize) -> Option<Vec<f64>> {
    if vectors.is_empty() {
        // D = 1: the whole line; normal is the unit vector.
        return Some(vec![1.0]);
    }
    let m = DMatrix::from_fn(vectors.len(), big, |i, j| vectors[i][j]);
    if m.rank(1e-10) < vectors.len() {
        return None;
    }
    // Generalized cross product via signed minors.
    let mut n = vec![0.0; big];
    for (col, slot) in n.iter_mut().enumerate() {
        let minor = DMatrix::from_fn(vectors.len(), big - 1, |i, j| {
            let jj = if j < col { j } else { j + 1 };
            vectors[i][jj]
        });
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * minor.determinant();
    }
    let norm = dot(&n, &n).sqrt();
    if norm < 1e-14 {
        return None;
    }
    Some(n.into_iter().map(|x| x / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d1() -> (VelocitySet, Thermo) {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        (vs, th)
    }

    #[test]
    fn theta_cases() {
        let (vs, th) = d1();
        let zero = ChemicalPotential::zero(1);
        for v in 0..vs.len() {
            assert_eq!(th.theta(&zero, v), 0.5);
        }
        assert!(th.theta(&ChemicalPotential(vec![-50.0, 0.0]), 0) < 2e-22);
        let plus = vs.components(0)[0];
        assert_eq!(plus, 0.5);
        // logistic(1) evaluated independently
        let expected = 1.0 / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(
            th.theta(&ChemicalPotential(vec![0.0, 2.0]), 0),
            expected,
            epsilon = 1e-15
        );
        assert_relative_eq!(expected, 0.731058, epsilon = 1e-6);
    }

    #[test]
    fn logistic_is_stable_in_the_tails() {
        assert_eq!(logistic(1000.0), 1.0);
        assert_eq!(logistic(-1000.0), 0.0);
        assert!(logistic(-745.0) >= 0.0);
        assert!(softplus(1000.0).is_finite());
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi(0.0), 0.0);
        assert_eq!(chi(0.5), 0.25);
        // 0.731058 * 0.268942 = 0.1966122; the six-place figure 0.196611 is within 2e-6
        assert_relative_eq!(chi(0.731058), 0.196611, epsilon = 2e-6);
        assert_relative_eq!(chi(0.731058), 0.1966122, epsilon = 1e-7);
    }

    #[test]
    fn moments_at_zero_and_saturation() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let th = Thermo::new(&vs);
        let m = th.moments(&ChemicalPotential::zero(2));
        assert_eq!(m.0, vec![2.0, 0.0, 0.0]);
        let sat = th.moments(&ChemicalPotential(vec![60.0, 0.0, 0.0]));
        assert_relative_eq!(sat.rho(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn moments_match_product_measure_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in 1..=2 {
            let vs = VelocitySet::default_for_dim(d).unwrap();
            let th = Thermo::new(&vs);
            for _ in 0..20 {
                let lambda =
                    ChemicalPotential((0..=d).map(|_| rng.random_range(-2.0..2.0)).collect());
                // m_lambda(xi) proportional to exp(lambda . I(xi))
                let verts = Thermo::enumerate_vertices(&vs);
                let weights: Vec<f64> = verts.iter().map(|i| dot(&lambda.0, i).exp()).collect();
                let z: f64 = weights.iter().sum();
                let mut expect = vec![0.0; d + 1];
                for (w, i) in weights.iter().zip(&verts) {
                    for k in 0..=d {
                        expect[k] += w * i[k] / z;
                    }
                }
                let got = th.moments(&lambda);
                for k in 0..=d {
                    assert_relative_eq!(got.0[k], expect[k], epsilon = 1e-12);
                }
                assert_relative_eq!(th.log_partition(&lambda), z.ln(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inverse_at_barycenter_is_zero() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let th = Thermo::new(&vs);
        let l = th.inverse_lambda(&ThermoPoint::new(2.0, &[0.0, 0.0])).unwrap();
        assert!(l.0.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn inverse_rejects_boundary_and_outside() {
        let (_, th) = d1();
        assert!(matches!(
            th.inverse_lambda(&ThermoPoint::new(0.0, &[0.0])),
            Err(Error::NotInDomain { .. })
        ));
        assert!(matches!(
            th.inverse_lambda(&ThermoPoint::new(1.0, &[0.5])),
            Err(Error::NotInDomain { .. })
        ));
        assert!(th.inverse_lambda(&ThermoPoint::new(3.0, &[0.0])).is_err());
    }

    #[test]
    fn inverse_near_boundary_converges() {
        let (_, th) = d1();
        let tp = ThermoPoint::new(2.0 - 1e-6, &[0.0]);
        let l = th.inverse_lambda(&tp).unwrap();
        let back = th.moments(&l);
        assert!((back.rho() - tp.rho()).abs() <= 1e-12);
    }

    #[test]
    fn domain_membership_examples() {
        let (_, th) = d1();
        let c = th.in_u(&ThermoPoint::new(1.0, &[0.0]));
        assert!(c.inside);
        // distance from (1,0) to the edge through (0,0) and (1,1/2)
        assert_relative_eq!(c.margin, 0.5 / 1.25f64.sqrt(), epsilon = 1e-12);
        assert!(!th.in_u(&ThermoPoint::new(0.0, &[0.0])).inside);
        assert!(!th.in_u(&ThermoPoint::new(3.0, &[0.0])).inside);
        let vs2 = VelocitySet::default_for_dim(2).unwrap();
        let th2 = Thermo::new(&vs2);
        assert!(th2.in_u(&ThermoPoint::new(2.0, &[0.0, 0.0])).inside);
        assert!(!th2.in_u(&ThermoPoint::new(0.0, &[0.0, 0.0])).inside);
        assert!(!th2.in_u(&ThermoPoint::new(5.0, &[0.0, 0.0])).inside);
    }

    #[test]
    fn slab_bounds_match_vertex_enumeration() {
        for d in 1..=3 {
            let vs = VelocitySet::default_for_dim(d).unwrap();
            let th = Thermo::new(&vs);
            let verts = Thermo::enumerate_vertices(&vs);
            for s in &th.slabs {
                let hi = verts.iter().map(|v| dot(&s.normal, v)).fold(f64::MIN, f64::max);
                let lo = verts.iter().map(|v| dot(&s.normal, v)).fold(f64::MAX, f64::min);
                assert_relative_eq!(hi, s.hi, epsilon = 1e-12);
                assert_relative_eq!(lo, s.lo, epsilon = 1e-12);
            }
            // strictly positive convex combinations of vertices are interior
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            for _ in 0..50 {
                let w: Vec<f64> = verts.iter().map(|_| rng.random_range(0.1..1.0)).collect();
                let z: f64 = w.iter().sum();
                let mut p = vec![0.0; d + 1];
                for (wi, v) in w.iter().zip(&verts) {
                    for k in 0..=d {
                        p[k] += wi * v[k] / z;
                    }
                }
                assert!(th.in_u(&ThermoPoint(p)).inside);
            }
        }
    }

    #[test]
    fn clamp_moves_points_inside() {
        let (_, th) = d1();
        let (p, moved) = th.clamp_to_interior(&ThermoPoint::new(2.0, &[0.0]), 1e-9);
        assert!(moved);
        assert!(th.in_u(&p).margin >= 1e-9 * 0.999);
        let (q, moved) = th.clamp_to_interior(&ThermoPoint::new(1.0, &[0.1]), 1e-9);
        assert!(!moved);
        assert_eq!(q.0, vec![1.0, 0.1]);
        let l = th.inverse_lambda(&p).unwrap();
        assert!(chi(th.theta(&l, 0)) < 1e-8);
    }

    #[test]
    fn jacobian_is_spd_and_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            let vs = VelocitySet::default_for_dim(d).unwrap();
            let th = Thermo::new(&vs);
            for _ in 0..10 {
                let l: Vec<f64> = (0..=d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let j = th.jacobian(&ChemicalPotential(l.clone()));
                assert!(j.clone().symmetric_eigenvalues().min() > 0.0);
                let h = 1e-6;
                for b in 0..=d {
                    let mut lp = l.clone();
                    let mut lm = l.clone();
                    lp[b] += h;
                    lm[b] -= h;
                    let mp = th.moments(&ChemicalPotential(lp));
                    let mm = th.moments(&ChemicalPotential(lm));
                    for a in 0..=d {
                        let fd = (mp.0[a] - mm.0[a]) / (2.0 * h);
                        assert!((fd - j[(a, b)]).abs() <= 1e-6 * j[(a, b)].abs().max(1e-3));
                    }
                }
            }
        }
    }

    #[test]
    fn flux_coefficient_cases() {
        let (_, th) = d1();
        assert_relative_eq!(
            th.flux_coefficient(&ThermoPoint::new(1.0, &[0.0]), 0).unwrap(),
            0.25,
            epsilon = 1e-13
        );
        assert!(th.flux_coefficient(&ThermoPoint::new(1e-6, &[0.0]), 0).unwrap() < 1e-6);
    }

    #[test]
    fn theta_increases_with_mass_potential() {
        let (_, th) = d1();
        let mut prev = 0.0;
        for i in -20..20 {
            let t = th.theta(&ChemicalPotential(vec![i as f64 * 0.3, 0.7]), 1);
            assert!(t > prev);
            prev = t;
        }
    }
}
