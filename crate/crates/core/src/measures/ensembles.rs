use std::collections::HashMap;

use num_rational::Rational64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::VelocitySet;
use crate::thermo::{Thermo, ThermoPoint};

/// Largest number of occupancy bits that may be enumerated.
pub const ENUMERATION_LIMIT_BITS: usize = 24;

/// The cube `Lambda_L = {-L, ..., L}^d`, sites numbered lexicographically
/// with the first axis fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    dim: usize,
    half_width: usize,
}

impl Block {
    pub fn new(dim: usize, half_width: usize) -> Self {
        Self { dim, half_width }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn n_sites(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn offset(&self, site: usize) -> Vec<i64> {
        let side = self.side();
        let mut rest = site;
        (0..self.dim)
            .map(|_| {
                let c = (rest % side) as i64 - self.half_width as i64;
                rest /= side;
                c
            })
            .collect()
    }

    pub fn site(&self, offset: &[i64]) -> Option<usize> {
        let side = self.side() as i64;
        let mut idx = 0i64;
        for &c in offset.iter().rev() {
            let s = c + self.half_width as i64;
            if s < 0 || s >= side {
                return None;
            }
            idx = idx * side + s;
        }
        Some(idx as usize)
    }

    pub fn center(&self) -> usize {
        self.site(&vec![0; self.dim]).expect("origin lies in every block")
    }
}

/// One configuration of `({0,1}^V)^{Lambda_L}`, bit `site * |V| + v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockState {
    block: Block,
    n_vel: usize,
    code: u64,
}

impl BlockState {
    pub fn new(block: Block, n_vel: usize, code: u64) -> Self {
        Self { block, n_vel, code }
    }

    pub fn block(&self) -> Block {
        self.block
    }

    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn get(&self, site: usize, v: usize) -> bool {
        self.code >> (site * self.n_vel + v) & 1 == 1
    }

    /// `xi(z, v)` at the block offset `z`; false outside the block.
    pub fn at(&self, offset: &[i64], v: usize) -> bool {
        self.block.site(offset).is_some_and(|s| self.get(s, v))
    }

    pub fn word(&self, site: usize) -> u64 {
        (self.code >> (site * self.n_vel)) & ((1u64 << self.n_vel) - 1)
    }

    /// Restriction to the centered sub-block of half-width `ell`.
    pub fn restrict(&self, ell: usize) -> BlockState {
        let inner = Block::new(self.block.dim, ell);
        let mut code = 0u64;
        for s in 0..inner.n_sites() {
            let outer = self
                .block
                .site(&inner.offset(s))
                .expect("inner block must fit inside the outer block");
            code |= self.word(outer) << (s * self.n_vel);
        }
        BlockState::new(inner, self.n_vel, code)
    }
}

/// All `2^{|Lambda_L| |V|}` block states in increasing code order.
pub fn enumerate_block_states(
    dim: usize,
    half_width: usize,
    vs: &VelocitySet,
) -> Result<impl Iterator<Item = BlockState>> {
    let block = Block::new(dim, half_width);
    let bits = block.n_sites() * vs.len();
    if bits > ENUMERATION_LIMIT_BITS {
        return Err(Error::TooLarge {
            bits,
            limit: ENUMERATION_LIMIT_BITS,
        });
    }
    let n_vel = vs.len();
    Ok((0..1u64 << bits).map(move |code| BlockState::new(block, n_vel, code)))
}

/// Block half-width together with the exact total of the conserved vector,
/// stored in integer units of `1/den` from [`VelocitySet::integer_extended`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockIndex {
    pub dim: usize,
    pub half_width: usize,
    pub totals: Vec<i64>,
}

impl BlockIndex {
    /// From the exact block average `I^L` (per-site mean of `I`).
    pub fn from_average(vs: &VelocitySet, half_width: usize, average: &[Rational64]) -> Result<Self> {
        let block = Block::new(vs.dim(), half_width);
        if average.len() != vs.dim() + 1 {
            return Err(Error::SizeMismatch {
                expected: vs.dim() + 1,
                got: average.len(),
            });
        }
        let (den, _) = vs.integer_extended();
        let scale = Rational64::from_integer(den * block.n_sites() as i64);
        let totals = average
            .iter()
            .map(|a| {
                let t = a * scale;
                if t.is_integer() {
                    Ok(t.to_integer())
                } else {
                    Err(Error::EmptyHyperplane)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (_, rows) = vs.integer_extended();
        if !total_distribution(vs.len(), &rows, block.n_sites()).contains_key(&totals) {
            return Err(Error::EmptyHyperplane);
        }
        Ok(Self {
            dim: vs.dim(),
            half_width,
            totals,
        })
    }

    /// From per-velocity particle counts over the block.
    pub fn from_counts(vs: &VelocitySet, half_width: usize, counts: &[i64]) -> Self {
        let (_, rows) = vs.integer_extended();
        let mut totals = vec![0i64; vs.dim() + 1];
        for (v, &c) in counts.iter().enumerate() {
            for (t, r) in totals.iter_mut().zip(&rows[v]) {
                *t += c * r;
            }
        }
        Self {
            dim: vs.dim(),
            half_width,
            totals,
        }
    }

    pub fn of_state(vs: &VelocitySet, state: &BlockState) -> Self {
        let (_, rows) = vs.integer_extended();
        Self {
            dim: vs.dim(),
            half_width: state.block.half_width,
            totals: state_totals(state, &rows),
        }
    }

    /// Block average as floating point `(rho, p)`.
    pub fn average(&self, vs: &VelocitySet) -> ThermoPoint {
        let (den, _) = vs.integer_extended();
        let n = Block::new(self.dim, self.half_width).n_sites() as f64;
        ThermoPoint(self.totals.iter().map(|&t| t as f64 / (den as f64 * n)).collect())
    }
}

fn word_totals(word: u64, rows: &[Vec<i64>]) -> Vec<i64> {
    let mut t = vec![0i64; rows.first().map_or(0, |r| r.len())];
    let mut b = word;
    while b != 0 {
        let v = b.trailing_zeros() as usize;
        b &= b - 1;
        for (x, r) in t.iter_mut().zip(&rows[v]) {
            *x += r;
        }
    }
    t
}

fn state_totals(state: &BlockState, rows: &[Vec<i64>]) -> Vec<i64> {
    let mut t = vec![0i64; rows[0].len()];
    for s in 0..state.block.n_sites() {
        for (x, y) in t.iter_mut().zip(word_totals(state.word(s), rows)) {
            *x += y;
        }
    }
    t
}

/// Average of `f` under the uniform measure on the hyperplane
/// `{xi in ({0,1}^V)^{Lambda_L} : I^L(xi) = i}`, by brute-force enumeration.
pub fn canonical_expectation<F>(vs: &VelocitySet, i: &BlockIndex, f: F) -> Result<f64>
where
    F: Fn(&BlockState) -> f64,
{
    let (_, rows) = vs.integer_extended();
    let mut sum = 0.0;
    let mut count = 0u64;
    for state in enumerate_block_states(i.dim, i.half_width, vs)? {
        if state_totals(&state, &rows) == i.totals {
            sum += f(&state);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyHyperplane);
    }
    Ok(sum / count as f64)
}

/// Number of configurations of `sites` sites per total (integer units).
fn total_distribution(n_vel: usize, rows: &[Vec<i64>], sites: usize) -> HashMap<Vec<i64>, f64> {
    let mut single: HashMap<Vec<i64>, f64> = HashMap::new();
    for w in 0..1u64 << n_vel {
        *single.entry(word_totals(w, rows)).or_default() += 1.0;
    }
    let mut dist: HashMap<Vec<i64>, f64> = HashMap::new();
    dist.insert(vec![0; rows[0].len()], 1.0);
    for _ in 0..sites {
        let mut next: HashMap<Vec<i64>, f64> = HashMap::with_capacity(dist.len() * 2);
        for (t, c) in &dist {
            for (s, m) in &single {
                let key: Vec<i64> = t.iter().zip(s).map(|(a, b)| a + b).collect();
                *next.entry(key).or_default() += c * m;
            }
        }
        dist = next;
    }
    dist
}

/// Outcome of [`ensembles_gap`].
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleGap {
    pub canonical: f64,
    pub grand_canonical: f64,
    /// `|E_mu[f] - E_nu[f]|`.
    pub gap: f64,
    /// Grand canonical variance `<f; f>`.
    pub variance: f64,
    /// `<f; f>^{1/2} / |Lambda_L|`.
    pub bound_rhs: f64,
    /// Empirical constant `gap |Lambda_L| / <f; f>^{1/2}` (0 when the
    /// variance vanishes).
    pub constant: f64,
    pub outer_sites: usize,
}

/// Compare the canonical measure on `Lambda_L` (with `L = i.half_width`)
/// projected to `Lambda_ell` against the grand canonical product measure
/// at `lambda = Lambda(i)`, for a function `f` of the configuration on
/// `Lambda_ell`.
///
/// The canonical side counts configurations of the annulus
/// `Lambda_L \ Lambda_ell` per conserved total instead of enumerating the
/// whole block, so only `Lambda_ell` is enumerated.
pub fn ensembles_gap<F>(
    vs: &VelocitySet,
    thermo: &Thermo,
    ell: usize,
    i: &BlockIndex,
    f: F,
) -> Result<EnsembleGap>
where
    F: Fn(&BlockState) -> f64,
{
    if ell > i.half_width {
        return Err(Error::Contract(format!(
            "inner block half-width {ell} exceeds outer {}",
            i.half_width
        )));
    }
    let (_, rows) = vs.integer_extended();
    let inner = Block::new(i.dim, ell);
    let outer = Block::new(i.dim, i.half_width);
    let annulus = outer.n_sites() - inner.n_sites();
    let dist = total_distribution(vs.len(), &rows, annulus);

    let lambda = thermo.inverse_lambda(&i.average(vs))?;
    let theta = thermo.thetas(&lambda);

    let mut can_num = 0.0;
    let mut can_den = 0.0;
    let mut mean = 0.0;
    let mut weighted = Vec::with_capacity(1 << (inner.n_sites() * vs.len()));
    for state in enumerate_block_states(i.dim, ell, vs)? {
        let fx = f(&state);
        let t = state_totals(&state, &rows);
        let rest: Vec<i64> = i.totals.iter().zip(&t).map(|(a, b)| a - b).collect();
        if let Some(&c) = dist.get(&rest) {
            can_num += c * fx;
            can_den += c;
        }
        let mut w = 1.0;
        for s in 0..inner.n_sites() {
            for (v, th) in theta.iter().enumerate() {
                w *= if state.get(s, v) { *th } else { 1.0 - th };
            }
        }
        mean += w * fx;
        weighted.push((w, fx));
    }
    if can_den == 0.0 {
        return Err(Error::EmptyHyperplane);
    }
    let canonical = can_num / can_den;
    let variance: f64 = weighted.iter().map(|(w, x)| w * (x - mean).powi(2)).sum();
    let gap = (mean - canonical).abs();
    let sd = variance.sqrt();
    let n_outer = outer.n_sites() as f64;
    Ok(EnsembleGap {
        canonical,
        grand_canonical: mean,
        gap,
        variance,
        bound_rhs: sd / n_outer,
        constant: if sd > 0.0 { gap * n_outer / sd } else { 0.0 },
        outer_sites: outer.n_sites(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs1() -> VelocitySet {
        VelocitySet::default_for_dim(1).unwrap()
    }

    fn r(a: i64, b: i64) -> Rational64 {
        Rational64::new(a, b)
    }

    #[test]
    fn state_counts() {
        let vs = vs1();
        assert_eq!(enumerate_block_states(1, 0, &vs).unwrap().count(), 4);
        assert_eq!(enumerate_block_states(1, 1, &vs).unwrap().count(), 64);
        let vs2 = VelocitySet::default_for_dim(2).unwrap();
        assert_eq!(
            enumerate_block_states(2, 0, &vs2).unwrap().count(),
            1 << vs2.len()
        );
        assert!(matches!(
            enumerate_block_states(1, 6, &vs),
            Err(Error::TooLarge { bits: 26, .. })
        ));
    }

    #[test]
    fn block_geometry_roundtrips() {
        let b = Block::new(2, 2);
        assert_eq!(b.n_sites(), 25);
        for s in 0..b.n_sites() {
            assert_eq!(b.site(&b.offset(s)), Some(s));
        }
        assert_eq!(b.offset(b.center()), vec![0, 0]);
        assert_eq!(b.site(&[3, 0]), None);
    }

    #[test]
    fn unique_state_has_expectation_one() {
        let vs = vs1();
        // full block is the only state with full mass
        let i = BlockIndex::from_average(&vs, 1, &[r(2, 1), r(0, 1)]).unwrap();
        let full = (1u64 << 6) - 1;
        let e = canonical_expectation(&vs, &i, |s| (s.code() == full) as u8 as f64).unwrap();
        assert_eq!(e, 1.0);
        let center = Block::new(1, 1).center();
        let e = canonical_expectation(&vs, &i, |s| s.word(center).count_ones() as f64).unwrap();
        assert_eq!(e, 2.0);
    }

    #[test]
    fn canonical_matches_hand_count() {
        // d=1, L=1: mass 1 per site with zero momentum would need 3/2
        // particles of each velocity.
        let vs = vs1();
        assert!(matches!(
            BlockIndex::from_average(&vs, 1, &[r(1, 1), r(0, 1)]),
            Err(Error::EmptyHyperplane)
        ));
        // mass 2/3 per site, zero momentum: one `+` and one `-` particle.
        let i = BlockIndex::from_average(&vs, 1, &[r(2, 3), r(0, 1)]).unwrap();
        let plus = vs
            .index_of(&crate::model::Velocity::from_ratios(&[(1, 2)]).unwrap())
            .unwrap();
        let center = Block::new(1, 1).center();
        let e = canonical_expectation(&vs, &i, |s| s.get(center, plus) as u8 as f64).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-15);
        // both particles at the center: (1/3)(1/3)
        let e = canonical_expectation(&vs, &i, |s| (s.word(center) == 0b11) as u8 as f64).unwrap();
        assert!((e - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn canonical_is_exchangeable() {
        let vs = vs1();
        let i = BlockIndex::from_counts(&vs, 1, &[2, 1]);
        let per_site: Vec<f64> = (0..3)
            .map(|s| canonical_expectation(&vs, &i, |st| st.word(s).count_ones() as f64).unwrap())
            .collect();
        for x in &per_site {
            assert!((x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gap_of_constant_is_zero() {
        let vs = vs1();
        let th = Thermo::new(&vs);
        let i = BlockIndex::from_counts(&vs, 2, &[3, 2]);
        let g = ensembles_gap(&vs, &th, 1, &i, |_| 4.2).unwrap();
        assert!(g.gap < 1e-12);
        assert_eq!(g.constant, 0.0);
    }

    #[test]
    fn gap_of_odd_function_vanishes_at_zero_momentum() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let th = Thermo::new(&vs);
        let n = vs.len();
        // zero momentum, mass 3 over a single-site outer block of width 1
        let flip: Vec<usize> = (0..n)
            .map(|v| {
                let neg = crate::model::Velocity::new(
                    vs.velocity(v).components().iter().map(|c| -c).collect(),
                )
                .unwrap();
                vs.index_of(&neg).unwrap()
            })
            .collect();
        let mut counts = vec![0i64; n];
        counts[0] = 1;
        counts[flip[0]] = 1;
        let i = BlockIndex::from_counts(&vs, 0, &counts);
        let g = ensembles_gap(&vs, &th, 0, &i, |s| {
            s.get(0, 0) as u8 as f64 - s.get(0, flip[0]) as u8 as f64
        })
        .unwrap();
        assert!(g.gap < 1e-12, "{g:?}");
    }

    #[test]
    fn counting_route_matches_full_enumeration() {
        let vs = vs1();
        let th = Thermo::new(&vs);
        let fs: Vec<Box<dyn Fn(&BlockState) -> f64>> = vec![
            Box::new(|s| s.at(&[0], 0) as u8 as f64),
            Box::new(|s| (s.at(&[0], 1) && s.at(&[1], 1)) as u8 as f64),
            Box::new(|s| s.word(0).count_ones() as f64 * s.word(2).count_ones() as f64),
        ];
        for half in 1..=3 {
            let k = 2 * half as i64 + 1;
            let i = BlockIndex::from_counts(&vs, half, &[k / 2 + 1, (3 * k) / 10 + 1]);
            for f in &fs {
                let g = ensembles_gap(&vs, &th, 1, &i, f).unwrap();
                let brute = canonical_expectation(&vs, &i, |s| f(&s.restrict(1))).unwrap();
                assert!((g.canonical - brute).abs() < 1e-12, "{} vs {brute}", g.canonical);
            }
        }
    }

    #[test]
    fn grand_canonical_matches_thermo() {
        let vs = vs1();
        let th = Thermo::new(&vs);
        let i = BlockIndex::from_counts(&vs, 2, &[3, 1]);
        let avg = i.average(&vs);
        let lam = th.inverse_lambda(&avg).unwrap();
        let g = ensembles_gap(&vs, &th, 0, &i, |s| s.get(0, 0) as u8 as f64).unwrap();
        assert!((g.grand_canonical - th.theta(&lam, 0)).abs() < 1e-10);
    }
}
