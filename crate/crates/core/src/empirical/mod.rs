//! Empirical fields, pairings against test functions, and block and
//! boundary diagnostics evaluated on configurations.

mod testfn;

pub use testfn::{check_vanishing, trig_basis, TestFunction, TrigMode, Unit};

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Configuration, JumpLaw, Lattice, Observer, OccupationTimer, Side};
use crate::dynamics::BoundaryData;
use crate::error::{Error, Result};
use crate::grid::{trapezoid_in_time, Grid};
use crate::model::{rational_to_f64, VelocitySet};
use crate::thermo::{chi, ChemicalPotential, Thermo, ThermoPoint};

/// Margin used when block averages are pulled into the interior domain
/// before inverting the moment map.
pub const REPLACEMENT_CLAMP_MARGIN: f64 = 1e-6;

/// Anything that assigns a (possibly fractional) occupation to each
/// `(site, velocity)`: a configuration or a time average of one.
pub trait Occupation {
    fn lattice(&self) -> &Lattice;
    fn n_velocities(&self) -> usize;
    fn occupation(&self, site: usize, v: usize) -> f64;
}

impl Occupation for Configuration {
    fn lattice(&self) -> &Lattice {
        Configuration::lattice(self)
    }
    fn n_velocities(&self) -> usize {
        Configuration::n_velocities(self)
    }
    fn occupation(&self, site: usize, v: usize) -> f64 {
        if self.get(site, v) {
            1.0
        } else {
            0.0
        }
    }
}

/// Averaged occupations, site-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanOccupation {
    lattice: Lattice,
    n_vel: usize,
    values: Vec<f64>,
}

impl MeanOccupation {
    pub fn from_timer(timer: &OccupationTimer, lattice: Lattice, n_vel: usize) -> Self {
        let values = (0..lattice.n_sites())
            .flat_map(|s| (0..n_vel).map(move |v| (s, v)))
            .map(|(s, v)| timer.mean(s, v))
            .collect();
        Self { lattice, n_vel, values }
    }

    /// Plain average of several configurations on the same lattice.
    pub fn average(configs: &[Configuration]) -> Result<Self> {
        let first = configs
            .first()
            .ok_or_else(|| Error::Contract("cannot average zero configurations".into()))?;
        let lattice = first.lattice().clone();
        let n_vel = first.n_velocities();
        let mut values = vec![0.0; lattice.n_sites() * n_vel];
        for c in configs {
            if c.lattice() != &lattice || c.n_velocities() != n_vel {
                return Err(Error::Contract("configurations live on different lattices".into()));
            }
            for (s, &w) in c.words().iter().enumerate() {
                for v in 0..n_vel {
                    values[s * n_vel + v] += (w >> v & 1) as f64;
                }
            }
        }
        let m = configs.len() as f64;
        values.iter_mut().for_each(|x| *x /= m);
        Ok(Self { lattice, n_vel, values })
    }
}

impl Occupation for MeanOccupation {
    fn lattice(&self) -> &Lattice {
        &self.lattice
    }
    fn n_velocities(&self) -> usize {
        self.n_vel
    }
    fn occupation(&self, site: usize, v: usize) -> f64 {
        self.values[site * self.n_vel + v]
    }
}

/// `I_k` at a site.
pub fn conserved<O: Occupation + ?Sized>(occ: &O, vs: &VelocitySet, site: usize, k: usize) -> f64 {
    (0..vs.len()).map(|v| vs.extended(v, k) * occ.occupation(site, v)).sum()
}

/// Per-site weights `N^{-d} H(t, x/N)` so that a pairing is one dot product.
#[derive(Clone, Debug)]
pub struct PairingWeights(pub Vec<f64>);

impl PairingWeights {
    pub fn new(lattice: &Lattice, h: &dyn TestFunction, t: f64) -> Self {
        let scale = (lattice.n() as f64).powi(-(lattice.dim() as i32));
        Self(
            (0..lattice.n_sites())
                .map(|s| scale * h.value(t, &lattice.macro_point(s)))
                .collect(),
        )
    }
}

/// `<pi^{k,N}, H> = N^{-d} sum_x H(t, x/N) I_k(eta_x)`.
pub fn pair<O: Occupation + ?Sized>(occ: &O, vs: &VelocitySet, k: usize, h: &dyn TestFunction, t: f64) -> f64 {
    pair_weighted(occ, vs, k, &PairingWeights::new(occ.lattice(), h, t))
}

pub fn pair_weighted<O: Occupation + ?Sized>(
    occ: &O,
    vs: &VelocitySet,
    k: usize,
    w: &PairingWeights,
) -> f64 {
    w.0.iter()
        .enumerate()
        .filter(|(_, &x)| x != 0.0)
        .map(|(s, x)| x * conserved(occ, vs, s, k))
        .sum()
}

/// Pairings for every `k = 0..=d` in one pass.
pub fn pair_all<O: Occupation + ?Sized>(occ: &O, vs: &VelocitySet, w: &PairingWeights) -> Vec<f64> {
    let mut out = vec![0.0; vs.dim() + 1];
    for (s, &x) in w.0.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for v in 0..vs.len() {
            let o = occ.occupation(s, v);
            if o != 0.0 {
                for (k, acc) in out.iter_mut().enumerate() {
                    *acc += x * o * vs.extended(v, k);
                }
            }
        }
    }
    out
}

/// `N^{-(d-1)} sum_{x: x_1 = wall} H(t, x/N) I_k(eta_x)`, with the wall
/// layer `x_1 = 1` (left) or `x_1 = N - 1` (right).
pub fn boundary_pair<O: Occupation + ?Sized>(
    occ: &O,
    vs: &VelocitySet,
    k: usize,
    h: &dyn TestFunction,
    t: f64,
    side: Side,
) -> f64 {
    let lat = occ.lattice();
    let x1 = wall_layer(lat, side);
    let scale = (lat.n() as f64).powi(1 - lat.dim() as i32);
    (0..lat.n_transverse())
        .map(|tr| {
            let s = lat.site_at(x1, tr);
            scale * h.value(t, &lat.macro_point(s)) * conserved(occ, vs, s, k)
        })
        .sum()
}

fn wall_layer(lat: &Lattice, side: Side) -> usize {
    match side {
        Side::Left => 1,
        Side::Right => lat.n() - 1,
    }
}

/// The four boundary quantities: the wall layer compared with the reservoir
/// (`VMinus`, `VPlus`) or with the average over the `eps N` layers nearest
/// the wall (`V2Alpha`, `V2Beta`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryQuantity {
    VMinus,
    VPlus,
    V2Alpha,
    V2Beta,
}

impl BoundaryQuantity {
    pub const ALL: [Self; 4] = [Self::VMinus, Self::VPlus, Self::V2Alpha, Self::V2Beta];

    pub fn side(self) -> Side {
        match self {
            Self::VMinus | Self::V2Alpha => Side::Left,
            Self::VPlus | Self::V2Beta => Side::Right,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::VMinus => "V_minus",
            Self::VPlus => "V_plus",
            Self::V2Alpha => "V2_alpha",
            Self::V2Beta => "V2_beta",
        }
    }
}

/// Boundary quantity for component `k`, weighted by `g` at the transverse
/// points `x~/N`. `eps` is only used by the block variants.
pub fn boundary_diagnostic<O: Occupation + ?Sized>(
    occ: &O,
    vs: &VelocitySet,
    boundary: &BoundaryData,
    k: usize,
    which: BoundaryQuantity,
    g: &dyn Fn(&[f64]) -> f64,
    eps: f64,
) -> Result<f64> {
    let lat = occ.lattice();
    let n = lat.n();
    let side = which.side();
    let wall = wall_layer(lat, side);
    let width = (eps * n as f64).floor() as usize;
    if matches!(which, BoundaryQuantity::V2Alpha | BoundaryQuantity::V2Beta)
        && (width < 2 || width > n - 1)
    {
        return Err(Error::Contract(format!(
            "eps N = {width} must lie in 2..={} for the block boundary quantities",
            n - 1
        )));
    }
    let scale = (n as f64).powi(1 - lat.dim() as i32);
    let mut total = 0.0;
    for tr in 0..lat.n_transverse() {
        let u = lat.transverse_point(tr);
        let weight = g(&u);
        if weight == 0.0 {
            continue;
        }
        let at_wall = conserved(occ, vs, lat.site_at(wall, tr), k);
        let reference = match which {
            BoundaryQuantity::VMinus | BoundaryQuantity::VPlus => boundary
                .densities(side, &u)
                .iter()
                .enumerate()
                .map(|(v, a)| a * vs.extended(v, k))
                .sum::<f64>(),
            BoundaryQuantity::V2Alpha | BoundaryQuantity::V2Beta => {
                let layers: Vec<usize> = match side {
                    Side::Left => (1..=width).collect(),
                    Side::Right => (n - width..n).collect(),
                };
                layers
                    .iter()
                    .map(|&x1| conserved(occ, vs, lat.site_at(x1, tr), k))
                    .sum::<f64>()
                    / width as f64
            }
        };
        total += scale * weight * (at_wall - reference);
    }
    Ok(total)
}

/// Value of the block replacement diagnostic with bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Replacement {
    pub value: f64,
    /// Blocks that fit in the bulk and were summed.
    pub blocks: usize,
    /// Blocks whose average had to be pulled into the interior domain.
    pub clamped: usize,
}

/// `N^{-d} sum_x |block current - sum_v v_j v~_k chi(theta_v(Lambda(I^l)))|`
/// over blocks `x + {-l..l}^d` whose jumps stay inside the domain.
///
/// `j` is a spatial axis in `1..=d`, `k` a component in `0..=d`. The
/// current at `y` is `sum_v v~_k sum_z p(z, v) z_j eta(y, v) (1 - eta(y + z, v))`.
pub fn replacement_diagnostic(
    config: &Configuration,
    vs: &VelocitySet,
    thermo: &Thermo,
    law: &JumpLaw,
    ell: usize,
    j: usize,
    k: usize,
) -> Result<Replacement> {
    let lat = config.lattice();
    let d = lat.dim();
    if ell == 0 || j == 0 || j > d || k > d {
        return Err(Error::Contract(format!(
            "replacement diagnostic needs l >= 1, j in 1..={d}, k in 0..={d} (got l = {ell}, j = {j}, k = {k})"
        )));
    }
    let n = lat.n();
    let r = law.range() as usize;
    let lo = 1 + ell + r;
    let hi = (n - 1).saturating_sub(ell + r);

    // Local currents, only needed where every jump stays inside.
    let current: Vec<f64> = (0..lat.n_sites())
        .map(|s| {
            let x1 = lat.x1(s);
            if x1 < 1 + r || x1 + r > n - 1 {
                return 0.0;
            }
            let w = config.word(s);
            let mut c = 0.0;
            for v in 0..vs.len() {
                if w >> v & 1 == 0 {
                    continue;
                }
                let ek = vs.extended(v, k);
                for (z, p) in law.support(v) {
                    if z[j - 1] == 0 {
                        continue;
                    }
                    let t = lat.shift(s, z).expect("jump target inside the domain");
                    if !config.get(t, v) {
                        c += ek * rational_to_f64(p) * z[j - 1] as f64;
                    }
                }
            }
            c
        })
        .collect();

    let (den, rows) = vs.integer_extended();
    let site_totals: Vec<Vec<i64>> = (0..lat.n_sites())
        .map(|s| {
            let w = config.word(s);
            let mut t = vec![0i64; d + 1];
            for (v, row) in rows.iter().enumerate() {
                if w >> v & 1 == 1 {
                    t.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
            }
            t
        })
        .collect();

    let side = 2 * ell + 1;
    let volume = side.pow(d as u32);
    let offsets: Vec<Vec<i32>> = (0..volume)
        .map(|b| {
            let mut rest = b;
            (0..d)
                .map(|_| {
                    let c = (rest % side) as i32 - ell as i32;
                    rest /= side;
                    c
                })
                .collect()
        })
        .collect();

    let mut memo: HashMap<Vec<i64>, (f64, bool)> = HashMap::new();
    let mut warm = ChemicalPotential::zero(d);
    let mut value = 0.0;
    let mut blocks = 0;
    let mut clamped = 0;
    if lo <= hi {
        for x in 0..lat.n_sites() {
            let x1 = lat.x1(x);
            if x1 < lo || x1 > hi {
                continue;
            }
            let mut cur = 0.0;
            let mut tot = vec![0i64; d + 1];
            for off in &offsets {
                let y = lat.shift(x, off).expect("block inside the domain");
                cur += current[y];
                tot.iter_mut().zip(&site_totals[y]).for_each(|(a, b)| *a += b);
            }
            cur /= volume as f64;
            let (eq, was_clamped) = match memo.get(&tot) {
                Some(&hit) => hit,
                None => {
                    let avg = ThermoPoint(
                        tot.iter()
                            .map(|&t| t as f64 / (den as f64 * volume as f64))
                            .collect(),
                    );
                    let (pt, moved) = thermo.clamp_to_interior(&avg, REPLACEMENT_CLAMP_MARGIN);
                    let lambda = thermo
                        .inverse_lambda_from(&pt, &warm)
                        .or_else(|_| thermo.inverse_lambda(&pt))?;
                    let eq = (0..vs.len())
                        .map(|v| vs.extended(v, j) * vs.extended(v, k) * chi(thermo.theta(&lambda, v)))
                        .sum::<f64>();
                    if !moved {
                        warm = lambda;
                    }
                    memo.insert(tot, (eq, moved));
                    (eq, moved)
                }
            };
            value += (cur - eq).abs();
            blocks += 1;
            clamped += was_clamped as usize;
        }
    }
    Ok(Replacement {
        value: value * (n as f64).powi(-(d as i32)),
        blocks,
        clamped,
    })
}

/// Discrete `int_0^T int |grad f|^2 du dt` for a scalar field given on `grid`
/// at the listed times (trapezoid in time, central differences in space).
pub fn energy_estimate(grid: &Grid, times: &[f64], frames: &[Vec<f64>]) -> Result<f64> {
    if times.len() != frames.len() || times.len() < 2 {
        return Err(Error::Contract(format!(
            "energy needs at least two frames with matching times (got {} times, {} frames)",
            times.len(),
            frames.len()
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract("frame times must be non-decreasing".into()));
    }
    let weights = grid.quadrature_weights();
    let per_frame: Vec<f64> = frames
        .iter()
        .map(|f| {
            if f.len() != grid.n_nodes() {
                return Err(Error::Contract(format!(
                    "frame has {} values, grid has {} nodes",
                    f.len(),
                    grid.n_nodes()
                )));
            }
            Ok((0..grid.n_nodes())
                .map(|node| weights[node] * grid.gradient(f, node).iter().map(|g| g * g).sum::<f64>())
                .sum())
        })
        .collect::<Result<_>>()?;
    Ok(trapezoid_in_time(times, &per_frame))
}

/// One row of the pairing CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingRow {
    pub time: f64,
    pub k: usize,
    #[serde(rename = "H_id")]
    pub h_id: String,
    pub value: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
}

/// Pairings of one component against one test function over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingSeries {
    pub k: usize,
    pub h_id: String,
    pub n: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl PairingSeries {
    pub fn rows(&self) -> impl Iterator<Item = PairingRow> + '_ {
        self.times.iter().zip(&self.values).map(|(&time, &value)| PairingRow {
            time,
            k: self.k,
            h_id: self.h_id.clone(),
            value,
            n: self.n,
            seed: self.seed,
        })
    }
}

/// Write series as CSV with columns `time,k,H_id,value,N,seed`.
pub fn write_pairing_csv<W: Write>(series: &[PairingSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in series {
        for row in s.rows() {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Observer that pairs the configuration against a set of test functions
/// at fixed times.
pub struct PairingRecorder {
    vs: VelocitySet,
    basis: Vec<Arc<dyn TestFunction>>,
    times: Vec<f64>,
    next: usize,
    /// `values[h][i]` holds the pairings for every `k` at `times[i]`.
    values: Vec<Vec<Vec<f64>>>,
}

impl PairingRecorder {
    pub fn new(vs: VelocitySet, basis: Vec<Arc<dyn TestFunction>>, mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        let values = vec![Vec::with_capacity(times.len()); basis.len()];
        Self {
            vs,
            basis,
            times,
            next: 0,
            values,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times[..self.next]
    }

    /// `[h][time][k]`.
    pub fn values(&self) -> &[Vec<Vec<f64>>] {
        &self.values
    }

    pub fn into_series(self, n: usize, seed: u64) -> Vec<PairingSeries> {
        let times = self.times[..self.next].to_vec();
        let mut out = Vec::new();
        for (h, vals) in self.basis.iter().zip(&self.values) {
            for k in 0..=self.vs.dim() {
                out.push(PairingSeries {
                    k,
                    h_id: h.id(),
                    n,
                    seed,
                    times: times.clone(),
                    values: vals.iter().map(|row| row[k]).collect(),
                });
            }
        }
        out
    }
}

impl Observer for PairingRecorder {
    fn next_due(&self) -> Option<f64> {
        self.times.get(self.next).copied()
    }

    fn observe(&mut self, t: f64, config: &Configuration) -> Result<()> {
        for (h, out) in self.basis.iter().zip(self.values.iter_mut()) {
            let w = PairingWeights::new(config.lattice(), h.as_ref(), t);
            out.push(pair_all(config, &self.vs, &w));
        }
        self.next += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_jump_law;
    use crate::measures::{sample_from_thetas, sample_product, SpatialProfile};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sample(n: usize, d: usize, theta: f64, seed: u64) -> Configuration {
        let vs = VelocitySet::default_for_dim(d).unwrap();
        let lat = Lattice::new(n, d).unwrap();
        let th = vec![vec![theta; vs.len()]; lat.n_sites()];
        sample_from_thetas(lat, &th, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn trivial_pairings() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let lat = Lattice::new(6, 2).unwrap();
        let h = TrigMode::new(1, vec![1]);
        assert_eq!(pair(&Configuration::empty(lat.clone(), 4), &vs, 0, &h, 0.0), 0.0);
        let full = Configuration::full(lat.clone(), 4);
        let one = Unit { dim: 2 };
        let expect = 4.0 * lat.n_sites() as f64 / 36.0;
        assert!((pair(&full, &vs, 0, &one, 0.0) - expect).abs() < 1e-12);
        // full configuration carries no momentum
        assert!(pair(&full, &vs, 1, &one, 0.0).abs() < 1e-12);
        assert!((boundary_pair(&full, &vs, 0, &one, 0.0, Side::Right) - 4.0).abs() < 1e-12);
        // the transverse cosine averages out over a full layer
        assert!(boundary_pair(&full, &vs, 0, &h, 0.0, Side::Left).abs() < 1e-12);
    }

    #[test]
    fn clt_oracle_for_constant_profile() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let rho = 0.7;
        let profile = SpatialProfile::constant(1, ThermoPoint::new(rho, &[0.0])).unwrap();
        let lat = Lattice::new(40, 1).unwrap();
        let h = TrigMode::new(1, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 400;
        let xs: Vec<f64> = (0..m)
            .map(|_| {
                let c = sample_product(&th, &profile, lat.clone(), &mut rng).unwrap();
                pair(&c, &vs, 0, &h, 0.0)
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        // Riemann sum of sin(pi u) on the lattice is exact to O(N^{-2})
        let target = rho * 2.0 / PI;
        assert!((mean - target).abs() < 3.0 * (var / m as f64).sqrt() + 1e-3, "{mean} vs {target}");
    }

    #[test]
    fn mean_occupation_matches_configuration() {
        let c = sample(9, 1, 0.4, 5);
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let mean = MeanOccupation::average(&[c.clone(), c.clone()]).unwrap();
        let h = TrigMode::new(2, vec![]);
        assert!((pair(&mean, &vs, 1, &h, 0.0) - pair(&c, &vs, 1, &h, 0.0)).abs() < 1e-15);
        assert!(MeanOccupation::average(&[]).is_err());
    }

    #[test]
    fn boundary_quantities_vanish_trivially() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let bd = BoundaryData::uniform(1, &[0.3, 0.6]).unwrap();
        let c = sample(20, 1, 0.5, 1);
        for q in BoundaryQuantity::ALL {
            assert_eq!(boundary_diagnostic(&c, &vs, &bd, 0, q, &|_| 0.0, 0.2).unwrap(), 0.0);
        }
        assert!(boundary_diagnostic(&c, &vs, &bd, 0, BoundaryQuantity::V2Alpha, &|_| 1.0, 0.05).is_err());
        // a full configuration has identical layers
        let full = Configuration::full(Lattice::new(20, 1).unwrap(), 2);
        let v2 = boundary_diagnostic(&full, &vs, &bd, 0, BoundaryQuantity::V2Beta, &|_| 1.0, 0.25).unwrap();
        assert_eq!(v2, 0.0);
        let vm = boundary_diagnostic(&full, &vs, &bd, 0, BoundaryQuantity::VMinus, &|_| 1.0, 0.25).unwrap();
        assert!((vm - (2.0 - 0.9)).abs() < 1e-12);
    }

    #[test]
    fn v_minus_is_centred_under_matching_product_measure() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let alpha = [0.2, 0.45, 0.6, 0.8];
        let bd = BoundaryData::uniform(2, &alpha).unwrap();
        let lat = Lattice::new(12, 2).unwrap();
        let th = vec![alpha.to_vec(); lat.n_sites()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = |u: &[f64]| 1.0 + (2.0 * PI * u[0]).cos();
        for k in 0..3 {
            let xs: Vec<f64> = (0..500)
                .map(|_| {
                    let c = sample_from_thetas(lat.clone(), &th, &mut rng);
                    boundary_diagnostic(&c, &vs, &bd, k, BoundaryQuantity::VMinus, &g, 0.25).unwrap()
                })
                .collect();
            let m = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / m;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
            assert!(mean.abs() < 3.5 * sd / m.sqrt(), "k = {k}: {mean} (sd {sd})");
        }
    }

    #[test]
    fn replacement_vanishes_on_full_and_empty() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let law = build_jump_law(&vs).unwrap();
        let lat = Lattice::new(30, 1).unwrap();
        for c in [Configuration::full(lat.clone(), 2), Configuration::empty(lat.clone(), 2)] {
            for k in 0..2 {
                let r = replacement_diagnostic(&c, &vs, &th, &law, 2, 1, k).unwrap();
                assert!(r.value < 1e-5, "{r:?}");
                assert_eq!(r.blocks, 30 - 1 - 2 * 3);
                assert_eq!(r.clamped, r.blocks);
            }
        }
        assert!(replacement_diagnostic(&Configuration::empty(lat, 2), &vs, &th, &law, 0, 1, 0).is_err());
    }

    #[test]
    fn replacement_is_transverse_translation_invariant() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let th = Thermo::new(&vs);
        let law = build_jump_law(&vs).unwrap();
        let c = sample(10, 2, 0.5, 9);
        let lat = c.lattice().clone();
        let shifted_words: Vec<u64> = (0..lat.n_sites())
            .map(|s| c.word(lat.shift(s, &[0, 3]).unwrap()))
            .collect();
        let shifted = Configuration::from_words(lat, 4, shifted_words).unwrap();
        for (j, k) in [(1, 0), (2, 1), (1, 2)] {
            let a = replacement_diagnostic(&c, &vs, &th, &law, 1, j, k).unwrap();
            let b = replacement_diagnostic(&shifted, &vs, &th, &law, 1, j, k).unwrap();
            assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn replacement_decreases_with_block_size_at_equilibrium() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let law = build_jump_law(&vs).unwrap();
        let values: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&ell| {
                (0..8)
                    .map(|s| {
                        let c = sample(128, 1, 0.5, 100 + s);
                        replacement_diagnostic(&c, &vs, &th, &law, ell, 1, 0).unwrap().value
                    })
                    .sum::<f64>()
            })
            .collect();
        assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
    }

    #[test]
    fn energy_of_sine_mode() {
        let err = |m: usize| {
            let g = Grid::new(1, m).unwrap();
            let f = g.sample(|u| (PI * u[0]).sin());
            let e = energy_estimate(&g, &[0.0, 1.0], &[f.clone(), f]).unwrap();
            (e - PI * PI / 2.0).abs()
        };
        assert!(err(64) < 1e-2);
        let ratio = err(32) / err(64);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        let g = Grid::new(2, 8).unwrap();
        let c = vec![0.3; g.n_nodes()];
        assert!(energy_estimate(&g, &[0.0, 1.0], &[c.clone(), c]).unwrap() < 1e-28);
        assert!(energy_estimate(&g, &[0.0], &[vec![0.0; g.n_nodes()]]).is_err());
    }

    #[test]
    fn recorder_and_csv() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let c = sample(16, 1, 0.5, 2);
        let basis: Vec<Arc<dyn TestFunction>> = trig_basis(1).into_iter().map(|h| Arc::new(h) as _).collect();
        let mut rec = PairingRecorder::new(vs.clone(), basis, vec![0.5, 0.0]);
        rec.observe(0.0, &c).unwrap();
        rec.observe(0.5, &c).unwrap();
        assert_eq!(rec.next_due(), None);
        let series = rec.into_series(16, 42);
        assert_eq!(series.len(), 6);
        let h = TrigMode::new(2, vec![]);
        let s = series.iter().find(|s| s.h_id == "H2" && s.k == 1).unwrap();
        assert!((s.values[1] - pair(&c, &vs, 1, &h, 0.5)).abs() < 1e-15);
        let mut buf = Vec::new();
        write_pairing_csv(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,k,H_id,value,N,seed\n"));
        assert_eq!(text.lines().count(), 1 + 12);
    }

    proptest! {
        #[test]
        fn pairing_is_additive_and_bounded(seed: u64, m in 1u32..4, n in -2i32..3) {
            let vs = VelocitySet::default_for_dim(2).unwrap();
            let c = sample(7, 2, 0.5, seed);
            let lat = c.lattice().clone();
            let (mut a, mut b) = (Configuration::empty(lat.clone(), 4), Configuration::empty(lat, 4));
            for s in 0..c.n_sites() {
                let w = c.word(s);
                a.set_word(s, w & 0b0101);
                b.set_word(s, w & 0b1010);
            }
            let h = TrigMode::new(m, vec![n]);
            for k in 0..3 {
                let whole = pair(&c, &vs, k, &h, 0.0);
                prop_assert!((whole - pair(&a, &vs, k, &h, 0.0) - pair(&b, &vs, k, &h, 0.0)).abs() < 1e-12);
            }
            let h2 = TrigMode::new(1, vec![0]);
            let w1 = PairingWeights::new(c.lattice(), &h, 0.0);
            let w2 = PairingWeights::new(c.lattice(), &h2, 0.0);
            let sum = PairingWeights(w1.0.iter().zip(&w2.0).map(|(x, y)| 2.0 * x - y).collect());
            let lhs = pair_weighted(&c, &vs, 0, &sum);
            let rhs = 2.0 * pair_weighted(&c, &vs, 0, &w1) - pair_weighted(&c, &vs, 0, &w2);
            prop_assert!((lhs - rhs).abs() < 1e-12);
            prop_assert!(pair(&c, &vs, 0, &h, 0.0).abs() <= vs.len() as f64 + 1e-12);
        }
    }
}
