//! Brute-force oracles on tiny systems: the full generator matrix, its
//! stationary law, detailed balance, Dirichlet forms and relative entropy
//! along the exact evolution.
//!
//! States are occupancy codes with bit `s * |V| + v` holding `eta(s, v)`,
//! the same site-major, velocity-minor order as the snapshot payload.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::dynamics::{BoundaryData, Configuration, GeneratorParts, JumpLaw, Lattice, Side};
use crate::error::{Error, Result};
use crate::model::{collide_bits, collision_allowed, rational_to_f64, VelocitySet};

/// Largest number of occupancy bits for which the state space is built.
pub const STATE_LIMIT_BITS: usize = 20;
/// Largest chain for which dense linear algebra (LU, scaling and squaring)
/// is used.
pub const DENSE_LIMIT: usize = 1 << 10;

/// A tiny boundary-driven system whose state space can be enumerated.
#[derive(Clone, Debug)]
pub struct ExactSystem {
    lattice: Lattice,
    vs: VelocitySet,
    law: JumpLaw,
    boundary: BoundaryData,
    bits: usize,
}

/// Generator with sparse off-diagonal rows and `diag = -row sum`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

/// Which piece of the Dirichlet form to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DirichletPart {
    Exclusion,
    Collision,
    Boundary,
}

impl ExactSystem {
    pub fn new(n: usize, vs: &VelocitySet, law: &JumpLaw, boundary: &BoundaryData) -> Result<Self> {
        let lattice = Lattice::new(n, vs.dim())?;
        let bits = lattice.n_sites() * vs.len();
        if bits > STATE_LIMIT_BITS {
            return Err(Error::TooLarge {
                bits,
                limit: STATE_LIMIT_BITS,
            });
        }
        if law.dim() != vs.dim() || boundary.dim() != vs.dim() || boundary.n_velocities() != vs.len() {
            return Err(Error::Config("jump law, boundary and velocity set disagree".into()));
        }
        Ok(Self {
            lattice,
            vs: vs.clone(),
            law: law.clone(),
            boundary: boundary.clone(),
            bits,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n_states(&self) -> usize {
        1 << self.bits
    }

    fn n_vel(&self) -> usize {
        self.vs.len()
    }

    #[inline]
    fn occupied(&self, code: usize, site: usize, v: usize) -> bool {
        code >> (site * self.n_vel() + v) & 1 == 1
    }

    #[inline]
    fn word(&self, code: usize, site: usize) -> u64 {
        let nv = self.n_vel();
        ((code >> (site * nv)) as u64) & ((1u64 << nv) - 1)
    }

    #[inline]
    fn with_word(&self, code: usize, site: usize, word: u64) -> usize {
        let nv = self.n_vel();
        let mask = ((1usize << nv) - 1) << (site * nv);
        (code & !mask) | ((word as usize) << (site * nv))
    }

    #[inline]
    fn flip(&self, code: usize, site: usize, v: usize) -> usize {
        code ^ (1 << (site * self.n_vel() + v))
    }

    /// Exchange the occupations of `(x, v)` and `(y, v)`.
    #[inline]
    fn swap(&self, code: usize, x: usize, y: usize, v: usize) -> usize {
        if self.occupied(code, x, v) == self.occupied(code, y, v) {
            code
        } else {
            self.flip(self.flip(code, x, v), y, v)
        }
    }

    pub fn configuration(&self, code: usize) -> Configuration {
        let words = (0..self.lattice.n_sites()).map(|s| self.word(code, s)).collect();
        Configuration::from_words(self.lattice, self.n_vel(), words).expect("code fits the lattice")
    }

    pub fn code(&self, config: &Configuration) -> usize {
        (0..config.n_sites()).fold(0, |c, s| self.with_word(c, s, config.word(s)))
    }

    /// Exclusion moves `(z, weight)` for velocity `v`, with the jump weight
    /// `1/2 [|z| = 1] + p(z, v)/N` restricted to the selected parts.
    fn jump_weights(&self, v: usize, parts: GeneratorParts) -> Vec<(Vec<i32>, f64)> {
        let n = self.lattice.n() as f64;
        self.law
            .moves()
            .into_iter()
            .filter_map(|z| {
                let unit = z.iter().map(|c| c.abs()).sum::<i32>() == 1;
                let mut w = 0.0;
                if parts.ex1 && unit {
                    w += 0.5;
                }
                if parts.ex2 {
                    w += rational_to_f64(&self.law.probability(&z, v)) / n;
                }
                (w > 0.0).then_some((z, w))
            })
            .collect()
    }

    /// Reservoir densities touching `site`.
    fn reservoirs(&self, site: usize) -> Vec<Vec<f64>> {
        let lat = &self.lattice;
        let tr = lat.transverse_point(lat.transverse_index(site));
        let mut out = Vec::new();
        if lat.x1(site) == 1 {
            out.push(self.boundary.densities(Side::Left, &tr));
        }
        if lat.x1(site) == lat.n() - 1 {
            out.push(self.boundary.densities(Side::Right, &tr));
        }
        out
    }

    /// Every transition `(target, rate)` out of `code`, without the `N^2`
    /// speed-up. Targets may repeat.
    fn transitions(&self, code: usize, parts: GeneratorParts, jumps: &[Vec<(Vec<i32>, f64)>]) -> Vec<(usize, f64)> {
        let lat = &self.lattice;
        let mut out = Vec::new();
        for s in 0..lat.n_sites() {
            for v in 0..self.n_vel() {
                if !self.occupied(code, s, v) {
                    continue;
                }
                for (z, w) in &jumps[v] {
                    if let Some(t) = lat.shift(s, z) {
                        if !self.occupied(code, t, v) {
                            out.push((self.flip(self.flip(code, s, v), t, v), *w));
                        }
                    }
                }
            }
            if parts.collision {
                let word = self.word(code, s);
                for q in self.vs.quadruples() {
                    if collision_allowed(word, q) {
                        out.push((self.with_word(code, s, collide_bits(word, q)), 1.0));
                    }
                }
            }
            if parts.boundary {
                for dens in self.reservoirs(s) {
                    for (v, a) in dens.iter().enumerate() {
                        let r = if self.occupied(code, s, v) { 1.0 - a } else { *a };
                        out.push((self.flip(code, s, v), r));
                    }
                }
            }
        }
        out
    }

    /// `N^2 (L^{ex,1} + L^{ex,2} + L^c + L^b)` restricted to `parts`.
    pub fn generator(&self, parts: GeneratorParts) -> GeneratorMatrix {
        let nn = (self.lattice.n() * self.lattice.n()) as f64;
        let jumps: Vec<_> = (0..self.n_vel()).map(|v| self.jump_weights(v, parts)).collect();
        let mut rows = Vec::with_capacity(self.n_states());
        let mut diag = Vec::with_capacity(self.n_states());
        for code in 0..self.n_states() {
            let mut row = self.transitions(code, parts, &jumps);
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (t, r) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == t => last.1 += nn * r,
                    _ => merged.push((t, nn * r)),
                }
            }
            diag.push(-merged.iter().map(|e| e.1).sum::<f64>());
            rows.push(merged);
        }
        GeneratorMatrix { rows, diag }
    }

    /// Product Bernoulli measure with per-site, per-velocity densities.
    pub fn product_measure(&self, thetas: &[Vec<f64>]) -> Vec<f64> {
        (0..self.n_states())
            .map(|code| {
                let mut p = 1.0;
                for (s, th) in thetas.iter().enumerate() {
                    for (v, &t) in th.iter().enumerate() {
                        p *= if self.occupied(code, s, v) { t } else { 1.0 - t };
                    }
                }
                p
            })
            .collect()
    }

    /// Product measure with the same densities at every site.
    pub fn uniform_product(&self, theta: &[f64]) -> Vec<f64> {
        self.product_measure(&vec![theta.to_vec(); self.lattice.n_sites()])
    }

    /// One piece of the Dirichlet form of the density `f` with respect to
    /// `nu`, without the `N^2` speed-up. The exclusion part exchanges
    /// `(x, v)` and `(x + z, v)` with weight `P_N(z, v)`.
    pub fn dirichlet_form(&self, f: &[f64], nu: &[f64], part: DirichletPart) -> Result<f64> {
        check_density(f, nu)?;
        let lat = &self.lattice;
        let all = GeneratorParts::ALL;
        let jumps: Vec<_> = (0..self.n_vel()).map(|v| self.jump_weights(v, all)).collect();
        let mut total = 0.0;
        for code in 0..self.n_states() {
            if nu[code] == 0.0 {
                continue;
            }
            let sf = f[code].sqrt();
            let mut acc = 0.0;
            for s in 0..lat.n_sites() {
                match part {
                    DirichletPart::Exclusion => {
                        for (v, js) in jumps.iter().enumerate() {
                            for (z, w) in js {
                                if let Some(t) = lat.shift(s, z) {
                                    let other = self.swap(code, s, t, v);
                                    acc += w * (f[other].sqrt() - sf).powi(2);
                                }
                            }
                        }
                    }
                    DirichletPart::Collision => {
                        let word = self.word(code, s);
                        for q in self.vs.quadruples() {
                            if collision_allowed(word, q) {
                                let other = self.with_word(code, s, collide_bits(word, q));
                                acc += (f[other].sqrt() - sf).powi(2);
                            }
                        }
                    }
                    DirichletPart::Boundary => {
                        for dens in self.reservoirs(s) {
                            for (v, a) in dens.iter().enumerate() {
                                let r = if self.occupied(code, s, v) { 1.0 - a } else { *a };
                                acc += r * (f[self.flip(code, s, v)].sqrt() - sf).powi(2);
                            }
                        }
                    }
                }
            }
            total += nu[code] * acc;
        }
        Ok(total)
    }

    /// Sum of the three pieces.
    pub fn dirichlet_total(&self, f: &[f64], nu: &[f64]) -> Result<f64> {
        let mut t = 0.0;
        for part in [DirichletPart::Exclusion, DirichletPart::Collision, DirichletPart::Boundary] {
            t += self.dirichlet_form(f, nu, part)?;
        }
        Ok(t)
    }
}

/// Convenience wrapper: enumerate the system and assemble its generator.
pub fn build_full_generator(
    n: usize,
    vs: &VelocitySet,
    law: &JumpLaw,
    boundary: &BoundaryData,
    parts: GeneratorParts,
) -> Result<GeneratorMatrix> {
    Ok(ExactSystem::new(n, vs, law, boundary)?.generator(parts))
}

fn check_density(f: &[f64], nu: &[f64]) -> Result<()> {
    if f.len() != nu.len() {
        return Err(Error::NotDensity(format!("{} values for {} states", f.len(), nu.len())));
    }
    if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::NotDensity("negative or non-finite value".into()));
    }
    let mass: f64 = f.iter().zip(nu).map(|(a, b)| a * b).sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::NotDensity(format!("E_nu[f] = {mass}")));
    }
    Ok(())
}

impl GeneratorMatrix {
    /// Build from explicit off-diagonal rates.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.iter().any(|&(j, r)| j >= n || j == i || !(r >= 0.0 && r.is_finite())) {
                return Err(Error::Contract(format!("row {i} has an invalid entry")));
            }
        }
        let diag = rows.iter().map(|r| -r.iter().map(|e| e.1).sum::<f64>()).collect();
        Ok(Self { rows, diag })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn off_diagonal(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.rows[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    /// Largest `|sum_j Q_ij|`.
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(r, d)| (r.iter().map(|e| e.1).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |a, d| a.max(-d))
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|r| r.is_empty())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n_states();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            m[(i, i)] = self.diag[i];
            for &(j, r) in row {
                m[(i, j)] = r;
            }
        }
        m
    }

    /// `mu Q`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = mu.iter().zip(&self.diag).map(|(m, d)| m * d).collect();
        for (i, row) in self.rows.iter().enumerate() {
            if mu[i] != 0.0 {
                for &(j, r) in row {
                    out[j] += mu[i] * r;
                }
            }
        }
        out
    }

    /// `(Q g)(i) = sum_j Q_ij g(j)`.
    pub fn right_apply(&self, g: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| self.diag[i] * g[i] + row.iter().map(|&(j, r)| r * g[j]).sum::<f64>())
            .collect()
    }

    fn reachable(&self, start: usize, forward: bool) -> Vec<bool> {
        let n = self.n_states();
        let mut adj = vec![Vec::new(); if forward { 0 } else { n }];
        if !forward {
            for (i, row) in self.rows.iter().enumerate() {
                for &(j, r) in row {
                    if r > 0.0 {
                        adj[j].push(i);
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let next: Vec<usize> = if forward {
                self.rows[i].iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect()
            } else {
                adj[i].clone()
            };
            for j in next {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen
    }

    pub fn is_irreducible(&self) -> bool {
        self.n_states() <= 1
            || (self.reachable(0, true).iter().all(|&x| x) && self.reachable(0, false).iter().all(|&x| x))
    }
}

/// `max_j |(pi Q)_j|`.
pub fn stationarity_residual(q: &GeneratorMatrix, pi: &[f64]) -> f64 {
    q.left_apply(pi).iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Stationary law of an irreducible generator.
pub fn stationary_distribution(q: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = q.n_states();
    if n == 0 {
        return Err(Error::Contract("empty chain".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if !q.is_irreducible() {
        return Err(Error::Reducible);
    }
    let mut pi = if n <= DENSE_LIMIT {
        dense_stationary(q)?
    } else {
        power_stationary(q)
    };
    // one step of iterative refinement on the normalized system
    if n <= DENSE_LIMIT {
        let r = q.left_apply(&pi);
        let mut a = q.to_dense().transpose();
        a.row_mut(n - 1).fill(1.0);
        let mut b = DVector::from_iterator(n, r.iter().map(|x| -x));
        b[n - 1] = 1.0 - pi.iter().sum::<f64>();
        if let Some(corr) = a.lu().solve(&b) {
            pi.iter_mut().zip(corr.iter()).for_each(|(p, c)| *p += c);
        }
    }
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(pi)
}

fn dense_stationary(q: &GeneratorMatrix) -> Result<Vec<f64>> {
    let n = q.n_states();
    let mut a = q.to_dense().transpose();
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::LinearSolve("singular stationary system".into()))?;
    Ok(x.iter().copied().collect())
}

fn power_stationary(q: &GeneratorMatrix) -> Vec<f64> {
    let n = q.n_states();
    let lambda = q.max_exit_rate() * 1.05;
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let qpi = q.left_apply(&pi);
        let next: Vec<f64> = pi.iter().zip(&qpi).map(|(p, d)| p + d / lambda).collect();
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    pi
}

/// `max_{i != j} |nu_i Q_ij - nu_j Q_ji|`.
pub fn check_detailed_balance(q: &GeneratorMatrix, nu: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, row) in q.rows.iter().enumerate() {
        for &(j, r) in row {
            worst = worst.max((nu[i] * r - nu[j] * q.rate(j, i)).abs());
        }
    }
    worst
}

/// Total variation distance `(1/2) sum |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `H(mu | nu) = sum mu log(mu / nu)`.
pub fn relative_entropy(mu: &[f64], nu: &[f64]) -> f64 {
    mu.iter()
        .zip(nu)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, n)| m * (m / n).ln())
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Propagation {
    /// Dense scaling and squaring.
    Dense,
    /// Poisson-weighted powers of `I + Q / Lambda`.
    Uniformization,
}

/// `mu exp(t Q)`, by the dense exponential up to [`DENSE_LIMIT`] states
/// and uniformization above.
pub fn propagate(mu: &[f64], q: &GeneratorMatrix, t: f64) -> Vec<f64> {
    let method = if q.n_states() <= DENSE_LIMIT {
        Propagation::Dense
    } else {
        Propagation::Uniformization
    };
    propagate_with(mu, q, t, method)
}

pub fn propagate_with(mu: &[f64], q: &GeneratorMatrix, t: f64, method: Propagation) -> Vec<f64> {
    if t == 0.0 {
        return mu.to_vec();
    }
    match method {
        Propagation::Dense => {
            let e = (q.to_dense() * t).exp();
            let row = DVector::from_column_slice(mu).transpose() * e;
            row.iter().copied().collect()
        }
        Propagation::Uniformization => {
            let lambda = q.max_exit_rate().max(1e-300);
            // keep each chunk's Poisson mean moderate
            let chunks = (lambda * t / 30.0).ceil().max(1.0) as usize;
            let tau = t / chunks as f64;
            let mut cur = mu.to_vec();
            for _ in 0..chunks {
                cur = uniformize(&cur, q, lambda, tau);
            }
            cur
        }
    }
}

fn uniformize(mu: &[f64], q: &GeneratorMatrix, lambda: f64, t: f64) -> Vec<f64> {
    let m = lambda * t;
    let mut weight = (-m).exp();
    let mut cum = weight;
    let mut term = mu.to_vec();
    let mut out: Vec<f64> = term.iter().map(|x| weight * x).collect();
    let mut k = 0usize;
    while cum < 1.0 - 1e-16 && k < 10_000 {
        k += 1;
        let qt = q.left_apply(&term);
        term.iter_mut().zip(&qt).for_each(|(a, b)| *a += b / lambda);
        weight *= m / k as f64;
        cum += weight;
        out.iter_mut().zip(&term).for_each(|(o, x)| *o += weight * x);
    }
    out
}

/// `H(mu_t | nu)` at each of `times` for `mu_t = mu0 exp(t Q)`.
pub fn entropy_production(mu0: &[f64], q: &GeneratorMatrix, nu: &[f64], times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| relative_entropy(&propagate(mu0, q, t), nu))
        .collect()
}

/// One sample of the spectral inequality scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FormSample {
    /// `<L sqrt f, sqrt f>_nu` without the `N^2` speed-up.
    pub quadratic_form: f64,
    pub dirichlet: f64,
}

/// Evaluate `<L sqrt f, sqrt f>_nu` and `D_nu(f)` on random densities.
/// `q` is the generator including the speed-up; it is divided out.
pub fn inequality_scan<R: Rng + ?Sized>(
    system: &ExactSystem,
    q: &GeneratorMatrix,
    nu: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<FormSample>> {
    let nn = (system.lattice().n() * system.lattice().n()) as f64;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let raw: Vec<f64> = (0..nu.len()).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
        let mass: f64 = raw.iter().zip(nu).map(|(a, b)| a * b).sum();
        let f: Vec<f64> = raw.iter().map(|x| x / mass).collect();
        let sf: Vec<f64> = f.iter().map(|x| x.sqrt()).collect();
        let lsf = q.right_apply(&sf);
        let form = lsf.iter().zip(&sf).zip(nu).map(|((a, b), c)| a * b * c).sum::<f64>() / nn;
        out.push(FormSample {
            quadratic_form: form,
            dirichlet: system.dirichlet_total(&f, nu)?,
        });
    }
    Ok(out)
}
