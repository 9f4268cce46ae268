use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{low_mask, LocalState, VelocitySet};

/// Geometry of `D_N^d = {1, ..., N-1} x T_N^{d-1}`.
///
/// Sites are numbered with `x_1` varying fastest:
/// `index = (x_1 - 1) + (N - 1) * (x_2 + N * (x_3 + ...))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    n: usize,
    dim: usize,
}

/// Which reservoir a wall site touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// `x_1 = 1`, reservoir densities `alpha`.
    Left,
    /// `x_1 = N - 1`, reservoir densities `beta`.
    Right,
}

impl Lattice {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("lattice scale N = {n} must be at least 2")));
        }
        if dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        let sites = (n - 1)
            .checked_mul(n.checked_pow(dim as u32 - 1).unwrap_or(usize::MAX))
            .unwrap_or(usize::MAX);
        if sites > 1 << 28 {
            return Err(Error::Config(format!("lattice N = {n}, d = {dim} is too large")));
        }
        Ok(Self { n, dim })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_sites(&self) -> usize {
        (self.n - 1) * self.n.pow(self.dim as u32 - 1)
    }

    /// Number of transverse positions `N^{d-1}`.
    pub fn n_transverse(&self) -> usize {
        self.n.pow(self.dim as u32 - 1)
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dim);
        c.push(site % (self.n - 1) + 1);
        let mut rest = site / (self.n - 1);
        for _ in 1..self.dim {
            c.push(rest % self.n);
            rest /= self.n;
        }
        c
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let mut idx = 0;
        for &c in coords[1..].iter().rev() {
            idx = idx * self.n + c;
        }
        idx * (self.n - 1) + (coords[0] - 1)
    }

    /// Site from wall coordinate `x_1` and transverse index.
    pub fn site_at(&self, x1: usize, transverse: usize) -> usize {
        transverse * (self.n - 1) + (x1 - 1)
    }

    pub fn transverse_index(&self, site: usize) -> usize {
        site / (self.n - 1)
    }

    pub fn x1(&self, site: usize) -> usize {
        site % (self.n - 1) + 1
    }

    /// Transverse coordinates `(x_2, ..., x_d)` of a transverse index.
    pub fn transverse_coords(&self, t: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dim - 1);
        let mut rest = t;
        for _ in 1..self.dim {
            c.push(rest % self.n);
            rest /= self.n;
        }
        c
    }

    /// `x + z` if it stays inside `D_N^d`; transverse axes wrap.
    pub fn shift(&self, site: usize, z: &[i32]) -> Option<usize> {
        let mut c = self.coords(site);
        let x1 = c[0] as i64 + z[0] as i64;
        if x1 < 1 || x1 > self.n as i64 - 1 {
            return None;
        }
        c[0] = x1 as usize;
        for j in 1..self.dim {
            c[j] = (c[j] as i64 + z[j] as i64).rem_euclid(self.n as i64) as usize;
        }
        Some(self.site(&c))
    }

    /// Macroscopic position `x / N`.
    pub fn macro_point(&self, site: usize) -> Vec<f64> {
        self.coords(site)
            .into_iter()
            .map(|c| c as f64 / self.n as f64)
            .collect()
    }

    /// Transverse macroscopic position `x~ / N`.
    pub fn transverse_point(&self, t: usize) -> Vec<f64> {
        self.transverse_coords(t)
            .into_iter()
            .map(|c| c as f64 / self.n as f64)
            .collect()
    }

    /// `(side, transverse index, site)` for every wall site. When `N = 2`
    /// the single layer touches both reservoirs and appears twice.
    pub fn wall_sites(&self) -> Vec<(Side, usize, usize)> {
        let mut out = Vec::with_capacity(2 * self.n_transverse());
        for t in 0..self.n_transverse() {
            out.push((Side::Left, t, self.site_at(1, t)));
        }
        for t in 0..self.n_transverse() {
            out.push((Side::Right, t, self.site_at(self.n - 1, t)));
        }
        out
    }
}

/// Occupancy `eta(x, v)` for every site and velocity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    lattice: Lattice,
    n_vel: usize,
    occupancy: Vec<u64>,
    counts: Vec<u64>,
}

impl Configuration {
    pub fn empty(lattice: Lattice, n_vel: usize) -> Self {
        assert!(n_vel <= 64 && n_vel > 0);
        Self {
            lattice,
            n_vel,
            occupancy: vec![0; lattice.n_sites()],
            counts: vec![0; n_vel],
        }
    }

    pub fn full(lattice: Lattice, n_vel: usize) -> Self {
        let mut c = Self::empty(lattice, n_vel);
        let mask = low_mask(n_vel);
        for s in c.occupancy.iter_mut() {
            *s = mask;
        }
        for k in c.counts.iter_mut() {
            *k = lattice.n_sites() as u64;
        }
        c
    }

    /// Build from per-site bit words (bit `v` = velocity `v`).
    pub fn from_words(lattice: Lattice, n_vel: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != lattice.n_sites() {
            return Err(Error::Config(format!(
                "expected {} site words, got {}",
                lattice.n_sites(),
                words.len()
            )));
        }
        let mask = low_mask(n_vel);
        if words.iter().any(|w| w & !mask != 0) {
            return Err(Error::Config("occupancy word has bits beyond |V|".into()));
        }
        let mut c = Self {
            lattice,
            n_vel,
            occupancy: words,
            counts: vec![0; n_vel],
        };
        c.counts = c.recount();
        Ok(c)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n_velocities(&self) -> usize {
        self.n_vel
    }

    pub fn n_sites(&self) -> usize {
        self.occupancy.len()
    }

    #[inline]
    pub fn get(&self, site: usize, v: usize) -> bool {
        self.occupancy[site] >> v & 1 == 1
    }

    #[inline]
    pub fn word(&self, site: usize) -> u64 {
        self.occupancy[site]
    }

    pub fn words(&self) -> &[u64] {
        &self.occupancy
    }

    pub fn local(&self, site: usize) -> LocalState {
        LocalState::from_bits(self.occupancy[site], self.n_vel)
    }

    pub fn set(&mut self, site: usize, v: usize, occupied: bool) {
        let was = self.get(site, v);
        if was == occupied {
            return;
        }
        self.toggle(site, v);
    }

    #[inline]
    pub fn toggle(&mut self, site: usize, v: usize) {
        let bit = 1u64 << v;
        if self.occupancy[site] & bit != 0 {
            self.counts[v] -= 1;
        } else {
            self.counts[v] += 1;
        }
        self.occupancy[site] ^= bit;
    }

    /// Replace a whole site word; counts are updated bit by bit.
    pub fn set_word(&mut self, site: usize, word: u64) {
        let mut diff = self.occupancy[site] ^ word;
        while diff != 0 {
            let v = diff.trailing_zeros() as usize;
            diff &= diff - 1;
            self.toggle(site, v);
        }
    }

    /// Particle count per velocity.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn recount(&self) -> Vec<u64> {
        let mut counts = vec![0; self.n_vel];
        for &w in &self.occupancy {
            let mut b = w;
            while b != 0 {
                counts[b.trailing_zeros() as usize] += 1;
                b &= b - 1;
            }
        }
        counts
    }

    /// Cached per-velocity counts agree with the bit words.
    pub fn check_coherence(&self) -> bool {
        self.recount() == self.counts
    }

    /// `sum_x I(eta_x)`.
    pub fn total_conserved(&self, vs: &VelocitySet) -> Vec<f64> {
        let mut out = vec![0.0; vs.dim() + 1];
        for (v, &c) in self.counts.iter().enumerate() {
            out[0] += c as f64;
            for k in 0..vs.dim() {
                out[k + 1] += c as f64 * vs.components(v)[k];
            }
        }
        out
    }

    /// `I_k(eta_x)`.
    #[inline]
    pub fn conserved_at(&self, site: usize, k: usize, vs: &VelocitySet) -> f64 {
        let mut b = self.occupancy[site];
        let mut s = 0.0;
        while b != 0 {
            let v = b.trailing_zeros() as usize;
            b &= b - 1;
            s += vs.extended(v, k);
        }
        s
    }
}
