use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{collide_bits, collision_allowed, CollisionQuadruple, VelocitySet};

use super::boundary::{flip_rate, BoundaryData};
use super::jump::JumpLaw;
use super::lattice::{Configuration, Lattice, Side};
use super::rates::{neumaier, EventClass, RateIndex};

const NONE: u32 = u32::MAX;

/// Events between two full recomputations of the rate index.
pub const INTEGRITY_INTERVAL: u64 = 1_000_000;

/// Which parts of the generator are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorParts {
    /// Symmetric nearest-neighbour exclusion, weight 1/2.
    pub ex1: bool,
    /// Weakly asymmetric exclusion, weight `p(z, v)/N`.
    pub ex2: bool,
    pub collision: bool,
    pub boundary: bool,
}

impl GeneratorParts {
    pub const ALL: Self = Self {
        ex1: true,
        ex2: true,
        collision: true,
        boundary: true,
    };
    pub const NONE: Self = Self {
        ex1: false,
        ex2: false,
        collision: false,
        boundary: false,
    };

    /// Comma-separated subset of `ex1, ex2, ex, c, b`, or `all`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Self::NONE;
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "all" => p = Self::ALL,
                "ex" => {
                    p.ex1 = true;
                    p.ex2 = true;
                }
                "ex1" => p.ex1 = true,
                "ex2" => p.ex2 = true,
                "c" => p.collision = true,
                "b" => p.boundary = true,
                other => {
                    return Err(Error::Config(format!("unknown generator part `{other}`")))
                }
            }
        }
        Ok(p)
    }
}

/// Everything that defines the dynamics apart from the lattice scale.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub vs: VelocitySet,
    pub law: JumpLaw,
    pub boundary: BoundaryData,
    pub parts: GeneratorParts,
}

/// One transition of the process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Jump { from: usize, to: usize, v: usize },
    Collision { site: usize, quadruple: usize },
    Flip { site: usize, v: usize, side: Side },
}

impl Event {
    pub fn class(&self) -> EventClass {
        match self {
            Event::Jump { .. } => EventClass::Exclusion,
            Event::Collision { .. } => EventClass::Collision,
            Event::Flip { .. } => EventClass::Boundary,
        }
    }
}

/// Callback interface for [`Simulator::run_until`].
pub trait Observer {
    /// Next macroscopic time at which [`Observer::observe`] should be called.
    fn next_due(&self) -> Option<f64> {
        None
    }

    /// Called with the state at time `t` (the last state before `t`).
    fn observe(&mut self, _t: f64, _config: &Configuration) -> Result<()> {
        Ok(())
    }

    /// A site word changed at time `t`.
    fn on_change(&mut self, _t: f64, _site: usize, _old: u64, _new: u64) {}

    /// End of a `run_until` call at time `t`.
    fn finish(&mut self, _t: f64, _config: &Configuration) {}
}

/// `N^2 P_N(z, v) eta(x, v) (1 - eta(x + z, v))`; zero if `x + z` leaves the
/// domain.
pub fn exclusion_rate(
    config: &Configuration,
    law: &JumpLaw,
    site: usize,
    z: &[i32],
    v: usize,
) -> f64 {
    let lat = config.lattice();
    let Some(target) = lat.shift(site, z) else {
        return 0.0;
    };
    if !config.get(site, v) || config.get(target, v) {
        return 0.0;
    }
    let n = lat.n();
    (n * n) as f64 * law.p_n(n, z, v)
}

/// Total flip rate of `eta(x, v)` from the reservoirs touching `x`.
pub fn boundary_flip_rate(
    config: &Configuration,
    boundary: &BoundaryData,
    site: usize,
    v: usize,
) -> f64 {
    let lat = config.lattice();
    let occ = config.get(site, v);
    let tr = lat.transverse_point(lat.transverse_index(site));
    let mut r = 0.0;
    if lat.x1(site) == 1 {
        r += flip_rate(lat.n(), boundary.densities(Side::Left, &tr)[v], occ);
    }
    if lat.x1(site) == lat.n() - 1 {
        r += flip_rate(lat.n(), boundary.densities(Side::Right, &tr)[v], occ);
    }
    r
}

/// Exact continuous-time simulation of the generator with macroscopic clock.
#[derive(Clone, Debug)]
pub struct Simulator {
    config: Configuration,
    lattice: Lattice,
    parts: GeneratorParts,
    n_vel: usize,
    n_moves: usize,
    /// `targets[s * n_moves + m]` is `s + z_m` or `NONE`.
    targets: Vec<u32>,
    /// `sources[s * n_moves + m]` is `s - z_m` or `NONE`.
    sources: Vec<u32>,
    /// Per velocity: `(move index, N^2 P_N(z_m, v))` with positive rate.
    vel_moves: Vec<Vec<(u32, f64)>>,
    quads: Vec<CollisionQuadruple>,
    coll_count: Option<Vec<u16>>,
    wall: Vec<(Side, usize, usize)>,
    wall_density: Vec<Vec<f64>>,
    /// Wall entries of each site (at most two).
    wall_of_site: Vec<[u32; 2]>,
    index: RateIndex,
    n2: f64,
    time: f64,
    events: u64,
    class_events: [u64; 3],
    next_check: u64,
}

impl Simulator {
    pub fn new(dynamics: &Dynamics, initial: Configuration) -> Result<Self> {
        let lattice = *initial.lattice();
        let vs = &dynamics.vs;
        let n_vel = vs.len();
        if initial.n_velocities() != n_vel {
            return Err(Error::SizeMismatch {
                expected: n_vel,
                got: initial.n_velocities(),
            });
        }
        if vs.dim() != lattice.dim() || dynamics.law.dim() != lattice.dim() {
            return Err(Error::Config("velocity set and lattice dimensions differ".into()));
        }
        if dynamics.boundary.n_velocities() != n_vel || dynamics.boundary.dim() != lattice.dim() {
            return Err(Error::InvalidBoundary(
                "boundary data does not match the velocity set".into(),
            ));
        }
        let n = lattice.n();
        let n2 = (n * n) as f64;
        let moves = dynamics.law.moves();
        let n_moves = moves.len();
        let n_sites = lattice.n_sites();
        let mut targets = vec![NONE; n_sites * n_moves];
        let mut sources = vec![NONE; n_sites * n_moves];
        for s in 0..n_sites {
            for (m, z) in moves.iter().enumerate() {
                if let Some(t) = lattice.shift(s, z) {
                    targets[s * n_moves + m] = t as u32;
                    sources[t * n_moves + m] = s as u32;
                }
            }
        }
        let parts = dynamics.parts;
        let vel_moves = (0..n_vel)
            .map(|v| {
                moves
                    .iter()
                    .enumerate()
                    .filter_map(|(m, z)| {
                        let is_unit = z.iter().map(|c| c.abs()).sum::<i32>() == 1;
                        let sym = if parts.ex1 && is_unit { 0.5 } else { 0.0 };
                        let asym = if parts.ex2 {
                            crate::model::rational_to_f64(&dynamics.law.probability(z, v)) / n as f64
                        } else {
                            0.0
                        };
                        let r = n2 * (sym + asym);
                        (r > 0.0).then_some((m as u32, r))
                    })
                    .collect()
            })
            .collect();
        let quads = if parts.collision {
            vs.quadruples().to_vec()
        } else {
            Vec::new()
        };
        let coll_count = (n_vel <= 16 && !quads.is_empty()).then(|| {
            (0..1u64 << n_vel)
                .map(|w| quads.iter().filter(|q| collision_allowed(w, q)).count() as u16)
                .collect()
        });
        let wall = lattice.wall_sites();
        let wall_density = dynamics.boundary.cache(&lattice);
        let mut wall_of_site = vec![[NONE; 2]; n_sites];
        for (e, &(_, _, s)) in wall.iter().enumerate() {
            let slot = if wall_of_site[s][0] == NONE { 0 } else { 1 };
            wall_of_site[s][slot] = e as u32;
        }
        let index = RateIndex::new(n_sites, wall.len());
        let mut sim = Self {
            config: initial,
            lattice,
            parts,
            n_vel,
            n_moves,
            targets,
            sources,
            vel_moves,
            quads,
            coll_count,
            wall,
            wall_density,
            wall_of_site,
            index,
            n2,
            time: 0.0,
            events: 0,
            class_events: [0; 3],
            next_check: INTEGRITY_INTERVAL,
        };
        sim.rebuild();
        Ok(sim)
    }

    fn rebuild(&mut self) {
        for s in 0..self.lattice.n_sites() {
            let ex = self.exclusion_leaf(s);
            self.index.trees[0].set(s, ex);
            let c = self.collision_leaf(s);
            self.index.trees[1].set(s, c);
        }
        for e in 0..self.wall.len() {
            let b = self.boundary_leaf(e);
            self.index.trees[2].set(e, b);
        }
    }

    pub fn configuration(&self) -> &Configuration {
        &self.config
    }

    pub fn into_configuration(self) -> Configuration {
        self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Reset the clock (e.g. after a warm-up run).
    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn class_events(&self, class: EventClass) -> u64 {
        self.class_events[class as usize]
    }

    pub fn rate_index(&self) -> &RateIndex {
        &self.index
    }

    pub fn total_rate(&self) -> f64 {
        self.index.total()
    }

    pub fn parts(&self) -> GeneratorParts {
        self.parts
    }

    #[inline]
    fn exclusion_leaf(&self, s: usize) -> f64 {
        let w = self.config.word(s);
        let mut bits = w;
        let mut r = 0.0;
        let base = s * self.n_moves;
        while bits != 0 {
            let v = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            for &(m, c) in &self.vel_moves[v] {
                let t = self.targets[base + m as usize];
                if t != NONE && self.config.word(t as usize) >> v & 1 == 0 {
                    r += c;
                }
            }
        }
        r
    }

    #[inline]
    fn collision_count(&self, w: u64) -> usize {
        match &self.coll_count {
            Some(t) => t[w as usize] as usize,
            None => self.quads.iter().filter(|q| collision_allowed(w, q)).count(),
        }
    }

    #[inline]
    fn collision_leaf(&self, s: usize) -> f64 {
        if self.quads.is_empty() {
            return 0.0;
        }
        self.n2 * self.collision_count(self.config.word(s)) as f64
    }

    #[inline]
    fn boundary_leaf(&self, e: usize) -> f64 {
        if !self.parts.boundary {
            return 0.0;
        }
        let s = self.wall[e].2;
        let w = self.config.word(s);
        let dens = &self.wall_density[e];
        let mut r = 0.0;
        for (v, &a) in dens.iter().enumerate() {
            r += if w >> v & 1 == 1 { 1.0 - a } else { a };
        }
        self.n2 * r
    }

    fn refresh_site(&mut self, s: usize) {
        let ex = self.exclusion_leaf(s);
        self.index.trees[0].set(s, ex);
        for m in 0..self.n_moves {
            let y = self.sources[s * self.n_moves + m];
            if y != NONE {
                let r = self.exclusion_leaf(y as usize);
                self.index.trees[0].set(y as usize, r);
            }
        }
        if !self.quads.is_empty() {
            let c = self.collision_leaf(s);
            self.index.trees[1].set(s, c);
        }
        for e in self.wall_of_site[s] {
            if e != NONE {
                let b = self.boundary_leaf(e as usize);
                self.index.trees[2].set(e as usize, b);
            }
        }
    }

    fn pick(&self, u: f64) -> Event {
        let (class, leaf, mut rem) = self.index.locate(u);
        match class {
            EventClass::Exclusion => {
                let s = leaf;
                let w = self.config.word(s);
                let base = s * self.n_moves;
                let mut last = None;
                let mut bits = w;
                while bits != 0 {
                    let v = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    for &(m, c) in &self.vel_moves[v] {
                        let t = self.targets[base + m as usize];
                        if t != NONE && self.config.word(t as usize) >> v & 1 == 0 {
                            let ev = Event::Jump {
                                from: s,
                                to: t as usize,
                                v,
                            };
                            if rem < c {
                                return ev;
                            }
                            rem -= c;
                            last = Some(ev);
                        }
                    }
                }
                last.expect("exclusion leaf with positive rate has an allowed jump")
            }
            EventClass::Collision => {
                let w = self.config.word(leaf);
                let allowed: Vec<usize> = (0..self.quads.len())
                    .filter(|&q| collision_allowed(w, &self.quads[q]))
                    .collect();
                let k = ((rem / self.n2) as usize).min(allowed.len() - 1);
                Event::Collision {
                    site: leaf,
                    quadruple: allowed[k],
                }
            }
            EventClass::Boundary => {
                let (side, _, s) = self.wall[leaf];
                let w = self.config.word(s);
                let dens = &self.wall_density[leaf];
                let mut chosen = self.n_vel - 1;
                for (v, &a) in dens.iter().enumerate() {
                    let r = self.n2 * if w >> v & 1 == 1 { 1.0 - a } else { a };
                    if rem < r {
                        chosen = v;
                        break;
                    }
                    rem -= r;
                }
                Event::Flip {
                    site: s,
                    v: chosen,
                    side,
                }
            }
        }
    }

    fn apply(&mut self, ev: Event, t: f64, observers: &mut [&mut dyn Observer]) {
        match ev {
            Event::Jump { from, to, v } => {
                let (of, ot) = (self.config.word(from), self.config.word(to));
                self.config.toggle(from, v);
                self.config.toggle(to, v);
                for o in observers.iter_mut() {
                    o.on_change(t, from, of, of ^ (1 << v));
                    o.on_change(t, to, ot, ot ^ (1 << v));
                }
                self.refresh_site(from);
                self.refresh_site(to);
            }
            Event::Collision { site, quadruple } => {
                let old = self.config.word(site);
                let new = collide_bits(old, &self.quads[quadruple]);
                self.config.set_word(site, new);
                for o in observers.iter_mut() {
                    o.on_change(t, site, old, new);
                }
                self.refresh_site(site);
            }
            Event::Flip { site, v, .. } => {
                let old = self.config.word(site);
                self.config.toggle(site, v);
                for o in observers.iter_mut() {
                    o.on_change(t, site, old, old ^ (1 << v));
                }
                self.refresh_site(site);
            }
        }
        self.events += 1;
        self.class_events[ev.class() as usize] += 1;
    }

    /// Draw the holding time and the next event, apply it and advance the
    /// clock. Returns the event and the elapsed macroscopic time.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(Event, f64)> {
        let total = self.index.total();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::ZeroTotalRate);
        }
        let dt = rng.sample::<f64, _>(Exp1) / total;
        let ev = self.pick(rng.random::<f64>() * total);
        self.time += dt;
        self.apply(ev, self.time, &mut []);
        self.maybe_check()?;
        Ok((ev, dt))
    }

    fn maybe_check(&mut self) -> Result<()> {
        if self.events >= self.next_check {
            self.next_check = self.events + INTEGRITY_INTERVAL;
            self.check_integrity()?;
        }
        Ok(())
    }

    /// Recompute every leaf from scratch and compare with the stored index.
    pub fn check_integrity(&self) -> Result<()> {
        let n_sites = self.lattice.n_sites();
        let ex: Vec<f64> = (0..n_sites).map(|s| self.exclusion_leaf(s)).collect();
        let co: Vec<f64> = (0..n_sites).map(|s| self.collision_leaf(s)).collect();
        let bo: Vec<f64> = (0..self.wall.len()).map(|e| self.boundary_leaf(e)).collect();
        let recomputed = neumaier(ex.iter().chain(&co).chain(&bo).copied());
        let stored = self.index.total();
        let scale = recomputed.abs().max(1.0);
        let leaves_ok = ex
            .iter()
            .enumerate()
            .all(|(i, &x)| x == self.index.trees[0].leaf(i))
            && co
                .iter()
                .enumerate()
                .all(|(i, &x)| x == self.index.trees[1].leaf(i))
            && bo
                .iter()
                .enumerate()
                .all(|(i, &x)| x == self.index.trees[2].leaf(i));
        if !leaves_ok || (stored - recomputed).abs() > 1e-9 * scale {
            return Err(Error::RateIndexDrift { stored, recomputed });
        }
        if !self.config.check_coherence() {
            return Err(Error::Contract("per-velocity count cache is stale".into()));
        }
        Ok(())
    }

    /// Run until macroscopic time `t_end`, notifying observers at their due
    /// times and on every change.
    pub fn run_until<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        observers: &mut [&mut dyn Observer],
        rng: &mut R,
    ) -> Result<()> {
        loop {
            let total = self.index.total();
            if total <= 0.0 || !total.is_finite() {
                return Err(Error::ZeroTotalRate);
            }
            let t_next = self.time + rng.sample::<f64, _>(Exp1) / total;
            let horizon = t_next.min(t_end);
            for o in observers.iter_mut() {
                while let Some(due) = o.next_due() {
                    if due > horizon {
                        break;
                    }
                    o.observe(due.max(self.time), &self.config)?;
                }
            }
            if t_next > t_end {
                self.time = self.time.max(t_end);
                break;
            }
            let ev = self.pick(rng.random::<f64>() * total);
            self.time = t_next;
            self.apply(ev, t_next, observers);
            self.maybe_check()?;
        }
        for o in observers.iter_mut() {
            o.finish(self.time, &self.config);
        }
        Ok(())
    }
}

/// Simulate from `initial` up to macroscopic time `t_macro` and return the
/// final configuration.
pub fn simulate<R: Rng + ?Sized>(
    dynamics: &Dynamics,
    initial: Configuration,
    t_macro: f64,
    observers: &mut [&mut dyn Observer],
    rng: &mut R,
) -> Result<Configuration> {
    if !(t_macro >= 0.0) {
        return Err(Error::Contract(format!("T = {t_macro} must be non-negative")));
    }
    let mut sim = Simulator::new(dynamics, initial)?;
    if t_macro == 0.0 {
        for o in observers.iter_mut() {
            while let Some(due) = o.next_due() {
                if due > 0.0 {
                    break;
                }
                o.observe(0.0, sim.configuration())?;
            }
            o.finish(0.0, sim.configuration());
        }
        return Ok(sim.into_configuration());
    }
    sim.run_until(t_macro, observers, rng)?;
    Ok(sim.into_configuration())
}

/// Records full configurations at fixed times.
#[derive(Clone, Debug, Default)]
pub struct SnapshotRecorder {
    times: Vec<f64>,
    next: usize,
    pub snapshots: Vec<(f64, Configuration)>,
}

impl SnapshotRecorder {
    pub fn new(mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        Self {
            times,
            next: 0,
            snapshots: Vec::new(),
        }
    }
}

impl Observer for SnapshotRecorder {
    fn next_due(&self) -> Option<f64> {
        self.times.get(self.next).copied()
    }

    fn observe(&mut self, t: f64, config: &Configuration) -> Result<()> {
        self.snapshots.push((t, config.clone()));
        self.next += 1;
        Ok(())
    }
}

/// Exact time integral of every occupation variable `eta(x, v)`.
#[derive(Clone, Debug)]
pub struct OccupationTimer {
    n_vel: usize,
    start: f64,
    end: f64,
    last: Vec<f64>,
    acc: Vec<f64>,
}

impl OccupationTimer {
    pub fn new(t0: f64, config: &Configuration) -> Self {
        let len = config.n_sites() * config.n_velocities();
        Self {
            n_vel: config.n_velocities(),
            start: t0,
            end: t0,
            last: vec![t0; len],
            acc: vec![0.0; len],
        }
    }

    pub fn elapsed(&self) -> f64 {
        self.end - self.start
    }

    /// `int eta(x, v) dt` over the observed window.
    pub fn integral(&self, site: usize, v: usize) -> f64 {
        self.acc[site * self.n_vel + v]
    }

    /// Time-averaged occupation of `(x, v)`.
    pub fn mean(&self, site: usize, v: usize) -> f64 {
        let el = self.elapsed();
        if el > 0.0 {
            self.integral(site, v) / el
        } else {
            0.0
        }
    }
}

impl Observer for OccupationTimer {
    fn on_change(&mut self, t: f64, site: usize, old: u64, new: u64) {
        let mut diff = old ^ new;
        while diff != 0 {
            let v = diff.trailing_zeros() as usize;
            diff &= diff - 1;
            let i = site * self.n_vel + v;
            if old >> v & 1 == 1 {
                self.acc[i] += t - self.last[i];
            }
            self.last[i] = t;
        }
    }

    fn finish(&mut self, t: f64, config: &Configuration) {
        for s in 0..config.n_sites() {
            let w = config.word(s);
            for v in 0..self.n_vel {
                let i = s * self.n_vel + v;
                if w >> v & 1 == 1 {
                    self.acc[i] += t - self.last[i];
                }
                self.last[i] = t;
            }
        }
        self.end = t;
    }
}
