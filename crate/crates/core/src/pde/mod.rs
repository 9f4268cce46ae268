//! Finite-difference solver for the hydrodynamic system
//! `d_t u + sum_v (1, v) [v . grad chi(theta_v(Lambda(u)))] = (1/2) Lap u`
//! on `[0, 1] x T^{d-1}` with Dirichlet data on `x_1 in {0, 1}`, and a
//! residual of its weak formulation.

mod linear;
mod weak;

pub use weak::{pde_pairing, weak_residual};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{BoundaryData, Side, Snapshot};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::measures::SpatialProfile;
use crate::model::VelocitySet;
use crate::thermo::{chi, ChemicalPotential, Thermo, ThermoPoint};

/// Node count above which the flux field is evaluated in parallel.
const PARALLEL_NODES: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Forward Euler for both terms.
    Explicit,
    /// Backward Euler for the diffusion, forward Euler for the flux.
    Imex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxDifference {
    Central,
    /// First-order upwinding along the sign of `v_j`.
    Upwind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub m: usize,
    pub dt: f64,
    pub scheme: Scheme,
    /// Explicit steps must satisfy `dt <= cfl h^2 / d`.
    pub cfl: f64,
    /// Distance to the domain boundary below which nodes are clamped.
    pub margin: f64,
    /// Include the transport term. Off gives the pure heat equation.
    pub flux: bool,
    pub flux_difference: FluxDifference,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            m: 64,
            dt: 0.0,
            scheme: Scheme::Imex,
            cfl: 0.9,
            margin: 1e-6,
            flux: true,
            flux_difference: FluxDifference::Central,
        }
    }
}

impl SolverConfig {
    /// Config whose `dt` is `fraction` of the explicit stability limit.
    pub fn with_stable_dt(dim: usize, m: usize, scheme: Scheme, fraction: f64) -> Self {
        let h = 1.0 / m as f64;
        Self {
            m,
            dt: fraction * h * h / dim as f64,
            scheme,
            ..Self::default()
        }
    }
}

/// Nodal fields `u_k`, `k = 0..=d`, at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeState {
    pub t: f64,
    /// `fields[k][node]`.
    pub fields: Vec<Vec<f64>>,
    /// Cumulative number of node clamps.
    pub clamps: usize,
    /// Largest mismatch between the initial profile and the wall data.
    pub trace_mismatch: f64,
    lambda: Vec<Vec<f64>>,
}

impl PdeState {
    pub fn point(&self, node: usize) -> ThermoPoint {
        ThermoPoint(self.fields.iter().map(|f| f[node]).collect())
    }

    /// Node-major, component-minor, as stored in field snapshots.
    pub fn interleaved(&self) -> Vec<f64> {
        let n = self.fields[0].len();
        (0..n)
            .flat_map(|node| self.fields.iter().map(move |f| f[node]))
            .collect()
    }
}

/// Fields at the requested output times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub times: Vec<f64>,
    /// `frames[i][k][node]`.
    pub frames: Vec<Vec<Vec<f64>>>,
    pub steps: usize,
    pub clamps: usize,
}

impl Trajectory {
    pub fn final_fields(&self) -> &[Vec<f64>] {
        self.frames.last().expect("trajectory has at least one frame")
    }

    /// CSV with columns `time, x1..xd, u0..ud`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let d = self.grid.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.extend((0..=d).map(|k| format!("u{k}")));
        w.write_record(&header)?;
        for (t, frame) in self.times.iter().zip(&self.frames) {
            for node in 0..self.grid.n_nodes() {
                let mut rec = vec![t.to_string()];
                rec.extend(self.grid.point(node).iter().map(|x| x.to_string()));
                rec.extend(frame.iter().map(|f| f[node].to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One field snapshot per frame, scale `M`.
    pub fn snapshots(&self, vs: &VelocitySet) -> Vec<Snapshot> {
        self.times
            .iter()
            .zip(&self.frames)
            .map(|(&t, frame)| {
                let n = self.grid.n_nodes();
                let values = (0..n).flat_map(|node| frame.iter().map(move |f| f[node])).collect();
                Snapshot::from_fields(vs, self.grid.m(), t, values)
            })
            .collect()
    }
}

pub struct Solver {
    vs: VelocitySet,
    thermo: Thermo,
    boundary: BoundaryData,
    cfg: SolverConfig,
    grid: Grid,
    /// Wall values per line: left, right.
    walls: [Vec<ThermoPoint>; 2],
    /// Flux coefficients `chi(theta_v(Lambda(d)))` at the walls, per line.
    wall_flux: [Vec<Vec<f64>>; 2],
}

impl Solver {
    pub fn new(vs: &VelocitySet, boundary: &BoundaryData, cfg: SolverConfig) -> Result<Self> {
        let dim = vs.dim();
        if boundary.dim() != dim || boundary.n_velocities() != vs.len() {
            return Err(Error::InvalidBoundary("boundary data does not match the velocity set".into()));
        }
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {}", cfg.dt)));
        }
        let grid = Grid::new(dim, cfg.m)?;
        let thermo = Thermo::new(vs);
        let solver = Self {
            vs: vs.clone(),
            thermo,
            boundary: boundary.clone(),
            cfg,
            grid,
            walls: [Vec::new(), Vec::new()],
            wall_flux: [Vec::new(), Vec::new()],
        };
        solver.check_dt(solver.cfg.dt)?;
        solver.with_walls()
    }

    fn with_walls(mut self) -> Result<Self> {
        for (i, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let mut pts = Vec::with_capacity(self.grid.n_lines());
            let mut flux = Vec::with_capacity(self.grid.n_lines());
            for line in 0..self.grid.n_lines() {
                let p = self.boundary.wall_value(&self.vs, side, &self.grid.line_point(line));
                let lambda = self.thermo.inverse_lambda(&p)?;
                flux.push(self.thermo.thetas(&lambda).into_iter().map(chi).collect());
                pts.push(p);
            }
            self.walls[i] = pts;
            self.wall_flux[i] = flux;
        }
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn thermo(&self) -> &Thermo {
        &self.thermo
    }

    pub fn velocity_set(&self) -> &VelocitySet {
        &self.vs
    }

    pub fn boundary(&self) -> &BoundaryData {
        &self.boundary
    }

    /// Dirichlet value at a wall line.
    pub fn wall_value(&self, side: Side, line: usize) -> &ThermoPoint {
        &self.walls[side as usize][line]
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        let h = self.grid.h();
        if self.cfg.scheme == Scheme::Explicit {
            let limit = self.cfg.cfl * h * h / self.grid.dim() as f64;
            if dt > limit * (1.0 + 1e-12) {
                return Err(Error::CflViolation { dt, limit });
            }
        } else if self.cfg.flux {
            let vmax = (0..self.vs.len())
                .flat_map(|v| self.vs.components(v).iter().map(|c| c.abs()))
                .fold(0.0, f64::max);
            // chi <= 1/4 bounds the transport speed
            let limit = self.cfg.cfl * h / (vmax * self.grid.dim() as f64).max(1e-300);
            if dt > limit {
                return Err(Error::CflViolation { dt, limit });
            }
        }
        Ok(())
    }

    /// Sample `profile` at the nodes and pin the walls to the boundary data.
    pub fn initialize(&self, profile: &SpatialProfile) -> Result<PdeState> {
        let d = self.grid.dim();
        if profile.dim() != d {
            return Err(Error::InvalidProfile(format!(
                "profile has dimension {}, solver {}",
                profile.dim(),
                d
            )));
        }
        let n = self.grid.n_nodes();
        let mut fields = vec![vec![0.0; n]; d + 1];
        let mut mismatch = 0.0f64;
        for node in 0..n {
            let value = profile.eval(&self.grid.point(node));
            let pinned = self.pinned(node);
            let p = match pinned {
                Some(w) => {
                    let gap = w.0.iter().zip(&value.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    mismatch = mismatch.max(gap);
                    w.clone()
                }
                None => {
                    let check = self.thermo.in_u(&value);
                    if check.margin < self.cfg.margin {
                        return Err(Error::NotInDomain {
                            point: value.0,
                            margin: check.margin,
                        });
                    }
                    value
                }
            };
            for (k, f) in fields.iter_mut().enumerate() {
                f[node] = p.0[k];
            }
        }
        Ok(PdeState {
            t: 0.0,
            fields,
            clamps: 0,
            trace_mismatch: mismatch,
            lambda: vec![vec![0.0; d + 1]; n],
        })
    }

    fn pinned(&self, node: usize) -> Option<&ThermoPoint> {
        let i = self.grid.i(node);
        let line = self.grid.line(node);
        if i == 0 {
            Some(&self.walls[0][line])
        } else if i == self.grid.m() {
            Some(&self.walls[1][line])
        } else {
            None
        }
    }

    /// `chi(theta_v(Lambda(u)))` at every node, `[node][v]`. Updates the
    /// warm-start cache.
    pub fn flux_field(&self, state: &mut PdeState) -> Result<Vec<Vec<f64>>> {
        let grid = &self.grid;
        let thermo = &self.thermo;
        let fields = &state.fields;
        let eval = |(node, warm): (usize, &mut Vec<f64>)| -> Result<Vec<f64>> {
            let i = grid.i(node);
            let line = grid.line(node);
            if i == 0 {
                return Ok(self.wall_flux[0][line].clone());
            }
            if i == grid.m() {
                return Ok(self.wall_flux[1][line].clone());
            }
            let p = ThermoPoint(fields.iter().map(|f| f[node]).collect());
            let start = ChemicalPotential(warm.clone());
            let lambda = thermo
                .inverse_lambda_from(&p, &start)
                .or_else(|_| thermo.inverse_lambda(&p))
                .map_err(|e| Error::NodeInversion {
                    node,
                    source: Box::new(e),
                })?;
            let out = thermo.thetas(&lambda).into_iter().map(chi).collect();
            *warm = lambda.0;
            Ok(out)
        };
        if grid.n_nodes() >= PARALLEL_NODES {
            state.lambda.par_iter_mut().enumerate().map(eval).collect()
        } else {
            state.lambda.iter_mut().enumerate().map(eval).collect()
        }
    }

    /// [`Solver::flux_field`] for stand-alone fields `[k][node]`.
    pub fn flux_at(&self, fields: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.grid.n_nodes();
        let mut state = PdeState {
            t: 0.0,
            fields: fields.to_vec(),
            clamps: 0,
            trace_mismatch: 0.0,
            lambda: vec![vec![0.0; self.grid.dim() + 1]; n],
        };
        self.flux_field(&mut state)
    }

    /// Tendency `(1/2) Lap_h u_k - sum_v v~_k (v . grad_h) chi(theta_v)` at
    /// every node; zero on the walls.
    pub fn rhs(&self, state: &mut PdeState) -> Result<Vec<Vec<f64>>> {
        let mut out = self.diffusion(&state.fields);
        if self.cfg.flux {
            let flux = self.flux_field(state)?;
            let transport = self.transport(&flux);
            for (o, t) in out.iter_mut().zip(&transport) {
                o.iter_mut().zip(t).for_each(|(a, b)| *a -= b);
            }
        }
        Ok(out)
    }

    fn diffusion(&self, fields: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let g = &self.grid;
        let h2 = g.h() * g.h();
        fields
            .iter()
            .map(|f| {
                (0..g.n_nodes())
                    .map(|node| {
                        if g.is_wall(node) {
                            return 0.0;
                        }
                        let mut lap = f[node - 1] - 2.0 * f[node] + f[node + 1];
                        for axis in 1..g.dim() {
                            lap += f[g.transverse_neighbor(node, axis, 1)] - 2.0 * f[node]
                                + f[g.transverse_neighbor(node, axis, -1)];
                        }
                        0.5 * lap / h2
                    })
                    .collect()
            })
            .collect()
    }

    /// `sum_v v~_k sum_j v_j D_j F_v` at interior nodes.
    fn transport(&self, flux: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let g = &self.grid;
        let d = g.dim();
        let h = g.h();
        let n_vel = self.vs.len();
        let mut out = vec![vec![0.0; g.n_nodes()]; d + 1];
        for node in 0..g.n_nodes() {
            if g.is_wall(node) {
                continue;
            }
            for v in 0..n_vel {
                let comps = self.vs.components(v);
                let mut div = 0.0;
                for (j, &vj) in comps.iter().enumerate() {
                    if vj == 0.0 {
                        continue;
                    }
                    let (fwd, bwd) = if j == 0 {
                        (node + 1, node - 1)
                    } else {
                        (g.transverse_neighbor(node, j, 1), g.transverse_neighbor(node, j, -1))
                    };
                    let deriv = match self.cfg.flux_difference {
                        FluxDifference::Central => (flux[fwd][v] - flux[bwd][v]) / (2.0 * h),
                        FluxDifference::Upwind if vj > 0.0 => (flux[node][v] - flux[bwd][v]) / h,
                        FluxDifference::Upwind => (flux[fwd][v] - flux[node][v]) / h,
                    };
                    div += vj * deriv;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    o[node] += self.vs.extended(v, k) * div;
                }
            }
        }
        out
    }

    /// Advance by `dt` with the configured scheme, then clamp interior
    /// nodes into the domain.
    pub fn step(&self, state: &mut PdeState, dt: f64) -> Result<()> {
        self.check_dt(dt)?;
        match self.cfg.scheme {
            Scheme::Explicit => {
                let r = self.rhs(state)?;
                for (f, r) in state.fields.iter_mut().zip(&r) {
                    f.iter_mut().zip(r).for_each(|(a, b)| *a += dt * b);
                }
            }
            Scheme::Imex => {
                let mut rhs = state.fields.clone();
                if self.cfg.flux {
                    let flux = self.flux_field(state)?;
                    let tr = self.transport(&flux);
                    for (r, t) in rhs.iter_mut().zip(&tr) {
                        r.iter_mut().zip(t).for_each(|(a, b)| *a -= dt * b);
                    }
                }
                for (k, r) in rhs.into_iter().enumerate() {
                    state.fields[k] = linear::implicit_diffusion(&self.grid, &r, 0.5 * dt)?;
                }
            }
        }
        state.t += dt;
        self.clamp(state);
        Ok(())
    }

    fn clamp(&self, state: &mut PdeState) {
        for node in 0..self.grid.n_nodes() {
            if self.grid.is_wall(node) {
                continue;
            }
            let p = state.point(node);
            let (q, moved) = self.thermo.clamp_to_interior(&p, self.cfg.margin);
            if moved {
                state.clamps += 1;
                for (k, f) in state.fields.iter_mut().enumerate() {
                    f[node] = q.0[k];
                }
            }
        }
    }

    /// Step until `t_end`, shortening the last step to land on it exactly.
    /// Returns the number of steps taken.
    pub fn advance_to(&self, state: &mut PdeState, t_end: f64) -> Result<usize> {
        let mut steps = 0;
        let dt = self.cfg.dt;
        while state.t < t_end {
            let remaining = t_end - state.t;
            if remaining <= 1e-12 * dt {
                break;
            }
            let h = if remaining < dt * (1.0 + 1e-9) { remaining } else { dt };
            self.step(state, h)?;
            steps += 1;
        }
        state.t = t_end.max(state.t);
        Ok(steps)
    }

    /// Solve from `profile` and record the fields at `times` (sorted,
    /// non-negative). `t = 0` returns the initial state.
    pub fn solve(&self, profile: &SpatialProfile, times: &[f64]) -> Result<Trajectory> {
        let mut state = self.initialize(profile)?;
        self.solve_from(&mut state, times)
    }

    pub fn solve_from(&self, state: &mut PdeState, times: &[f64]) -> Result<Trajectory> {
        if times.iter().any(|t| !(t.is_finite() && *t >= state.t)) || times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("output times must be sorted and not before the current time".into()));
        }
        let mut frames = Vec::with_capacity(times.len());
        let mut steps = 0;
        for &t in times {
            steps += self.advance_to(state, t)?;
            frames.push(state.fields.clone());
        }
        Ok(Trajectory {
            grid: self.grid,
            times: times.to_vec(),
            frames,
            steps,
            clamps: state.clamps,
        })
    }

    /// March until `max |rhs| <= tol` at interior nodes or `t_max` is
    /// reached. Returns the final residual.
    pub fn relax_to_steady(&self, state: &mut PdeState, tol: f64, t_max: f64) -> Result<f64> {
        let chunk = 50;
        loop {
            let r = self.rhs(state)?;
            let res = r.iter().flatten().fold(0.0f64, |a, b| a.max(b.abs()));
            if res <= tol || state.t >= t_max {
                return Ok(res);
            }
            for _ in 0..chunk {
                self.step(state, self.cfg.dt)?;
            }
        }
    }
}

#[cfg(test)]
mod tests;
