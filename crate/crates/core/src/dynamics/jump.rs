use num_rational::Rational64;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::model::{rational_to_f64, VelocitySet};

/// Finite-range transition law `p(z, v)` with mean `v` for each velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpLaw {
    dim: usize,
    /// `entries[v]` lists `(z, p(z, v))` with `p > 0`.
    entries: Vec<Vec<(Vec<i32>, Rational64)>>,
}

fn unit(dim: usize, axis: usize, sign: i32) -> Vec<i32> {
    let mut z = vec![0; dim];
    z[axis] = sign;
    z
}

/// Default law `p(+-e_j, v) = (1 +- d v_j) / (2d)`; requires `|v_j| < 1/d`.
pub fn build_jump_law(vs: &VelocitySet) -> Result<JumpLaw> {
    let d = vs.dim();
    let dr = Rational64::from_integer(d as i64);
    let mut entries = Vec::with_capacity(vs.len());
    for (idx, vel) in vs.velocities().iter().enumerate() {
        let mut list = Vec::with_capacity(2 * d);
        for (j, c) in vel.components().iter().enumerate() {
            if c.abs() * dr >= Rational64::one() {
                return Err(Error::InvalidJumpLaw(format!(
                    "velocity {idx} has |v_{}| = {} >= 1/d",
                    j + 1,
                    c.abs()
                )));
            }
            let base = Rational64::new(1, 2 * d as i64);
            list.push((unit(d, j, 1), base * (Rational64::one() + dr * c)));
            list.push((unit(d, j, -1), base * (Rational64::one() - dr * c)));
        }
        entries.push(list);
    }
    JumpLaw::new(vs, entries)
}

impl JumpLaw {
    /// Validate an explicit law: probabilities sum to one, the mean equals
    /// `v` exactly and every `+-e_j` has positive weight. Any finite range is
    /// accepted; see [`JumpLaw::range`].
    pub fn new(vs: &VelocitySet, entries: Vec<Vec<(Vec<i32>, Rational64)>>) -> Result<Self> {
        let d = vs.dim();
        if entries.len() != vs.len() {
            return Err(Error::InvalidJumpLaw(format!(
                "law has {} velocity rows, velocity set has {}",
                entries.len(),
                vs.len()
            )));
        }
        let mut cleaned = Vec::with_capacity(entries.len());
        for (v, row) in entries.into_iter().enumerate() {
            let mut sum = Rational64::zero();
            let mut mean = vec![Rational64::zero(); d];
            let mut kept: Vec<(Vec<i32>, Rational64)> = Vec::new();
            for (z, p) in row {
                if z.len() != d {
                    return Err(Error::InvalidJumpLaw(format!("jump {z:?} has wrong dimension")));
                }
                if p.is_negative() {
                    return Err(Error::InvalidJumpLaw(format!("negative weight at {z:?}")));
                }
                if z.iter().all(|&c| c == 0) {
                    return Err(Error::InvalidJumpLaw("jump z = 0 is not allowed".into()));
                }
                if p.is_zero() {
                    continue;
                }
                sum += p;
                for (m, &c) in mean.iter_mut().zip(&z) {
                    *m += p * Rational64::from_integer(c as i64);
                }
                match kept.iter_mut().find(|(y, _)| *y == z) {
                    Some(e) => e.1 += p,
                    None => kept.push((z, p)),
                }
            }
            if sum != Rational64::one() {
                return Err(Error::InvalidJumpLaw(format!(
                    "weights for velocity {v} sum to {sum}"
                )));
            }
            if mean.as_slice() != vs.velocity(v).components() {
                return Err(Error::InvalidJumpLaw(format!(
                    "mean jump for velocity {v} differs from the velocity"
                )));
            }
            for j in 0..d {
                for s in [1, -1] {
                    if !kept.iter().any(|(z, _)| *z == unit(d, j, s)) {
                        return Err(Error::InvalidJumpLaw(format!(
                            "velocity {v} has no weight on {}e_{}",
                            if s > 0 { "+" } else { "-" },
                            j + 1
                        )));
                    }
                }
            }
            cleaned.push(kept);
        }
        Ok(Self {
            dim: d,
            entries: cleaned,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self, v: usize) -> &[(Vec<i32>, Rational64)] {
        &self.entries[v]
    }

    /// `p(z, v)`, zero outside the support.
    pub fn probability(&self, z: &[i32], v: usize) -> Rational64 {
        self.entries[v]
            .iter()
            .find(|(y, _)| y.as_slice() == z)
            .map_or(Rational64::zero(), |e| e.1)
    }

    /// Largest `|z|_inf` in the support.
    pub fn range(&self) -> i32 {
        self.entries
            .iter()
            .flatten()
            .flat_map(|(z, _)| z.iter().map(|c| c.abs()))
            .max()
            .unwrap_or(1)
    }

    /// `P_N(z, v) = 1/2 sum_j (delta_{z,e_j} + delta_{z,-e_j}) + p(z, v)/N`.
    pub fn p_n(&self, n: usize, z: &[i32], v: usize) -> f64 {
        let nn = z.iter().filter(|&&c| c != 0).count();
        let sym = if nn == 1 && z.iter().any(|&c| c.abs() == 1) { 0.5 } else { 0.0 };
        sym + rational_to_f64(&self.probability(z, v)) / n as f64
    }

    /// Every jump `z` with `P_N(z, v) > 0` for some `v`, in a stable order:
    /// the unit vectors first, then the rest of the supports.
    pub fn moves(&self) -> Vec<Vec<i32>> {
        let mut out = Vec::new();
        for j in 0..self.dim {
            out.push(unit(self.dim, j, 1));
            out.push(unit(self.dim, j, -1));
        }
        for (z, _) in self.entries.iter().flatten() {
            if !out.contains(z) {
                out.push(z.clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_law_in_one_dimension() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let law = build_jump_law(&vs).unwrap();
        let plus = vs
            .index_of(&crate::model::Velocity::from_ratios(&[(1, 2)]).unwrap())
            .unwrap();
        assert_eq!(law.probability(&[1], plus), Rational64::new(3, 4));
        assert_eq!(law.probability(&[-1], plus), Rational64::new(1, 4));
        assert_eq!(law.probability(&[2], plus), Rational64::zero());
        assert_eq!(law.range(), 1);
    }

    #[test]
    fn zero_velocity_gives_symmetric_walk() {
        let vs = VelocitySet::from_text("0 0\n1/4 0\n-1/4 0\n0 1/4\n0 -1/4").unwrap();
        let law = build_jump_law(&vs).unwrap();
        let zero = vs
            .index_of(&crate::model::Velocity::from_ratios(&[(0, 1), (0, 1)]).unwrap())
            .unwrap();
        for (_, p) in law.support(zero) {
            assert_eq!(*p, Rational64::new(1, 4));
        }
    }

    #[test]
    fn means_are_exact_for_defaults() {
        for d in 1..=3 {
            let vs = VelocitySet::default_for_dim(d).unwrap();
            let law = build_jump_law(&vs).unwrap();
            for v in 0..vs.len() {
                let mut mean = vec![Rational64::zero(); d];
                for (z, p) in law.support(v) {
                    for j in 0..d {
                        mean[j] += p * Rational64::from_integer(z[j] as i64);
                    }
                }
                assert_eq!(mean.as_slice(), vs.velocity(v).components());
            }
        }
    }

    #[test]
    fn rejects_fast_velocities() {
        // |v| = 1/2 is the threshold in d = 2
        let vs = VelocitySet::from_text("1/2 0\n-1/2 0\n0 1/2\n0 -1/2").unwrap_or_else(|_| {
            panic!("velocity set itself is admissible by symmetry")
        });
        assert!(matches!(build_jump_law(&vs), Err(Error::InvalidJumpLaw(_))));
    }

    #[test]
    fn explicit_law_validation() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let r = Rational64::new;
        let plus = vs
            .index_of(&crate::model::Velocity::from_ratios(&[(1, 2)]).unwrap())
            .unwrap();
        let mut rows = vec![vec![]; 2];
        rows[plus] = vec![(vec![2], r(1, 4)), (vec![1], r(1, 2)), (vec![-1], r(1, 4))];
        rows[1 - plus] = vec![(vec![-2], r(1, 4)), (vec![-1], r(1, 2)), (vec![1], r(1, 4))];
        // mean = 2/4 + 1/2 - 1/4 = 3/4: wrong
        assert!(JumpLaw::new(&vs, rows.clone()).is_err());
        rows[plus] = vec![(vec![2], r(1, 8)), (vec![1], r(9, 16)), (vec![-1], r(5, 16))];
        rows[1 - plus] = vec![(vec![-2], r(1, 8)), (vec![-1], r(9, 16)), (vec![1], r(5, 16))];
        let law = JumpLaw::new(&vs, rows).unwrap();
        assert_eq!(law.range(), 2);
        assert_eq!(law.moves().len(), 4);
        assert!((law.p_n(10, &[2], plus) - 0.0125).abs() < 1e-15);
        assert!((law.p_n(10, &[1], plus) - 0.55625).abs() < 1e-15);
    }
}
