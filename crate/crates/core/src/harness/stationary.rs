use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{Lattice, OccupationTimer, Simulator};
use crate::empirical::{boundary_diagnostic, conserved, BoundaryQuantity, MeanOccupation};
use crate::error::Result;
use crate::grid::Grid;
use crate::measures::{sample_from_thetas, site_thetas};

use super::config::{ExperimentConfig, ExperimentKind, Model};
use super::converge::reference_solver;
use super::stats::{purpose, replica_rng, Welford};

/// Horizon for the PDE relaxation to its steady state.
const STEADY_T_MAX: f64 = 200.0;

/// Time-averaged conserved profile at one layer `x_1`, averaged over the
/// transverse directions and the replicas.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileRow {
    pub config_hash: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub x1: usize,
    pub u1: f64,
    pub k: usize,
    pub empirical: f64,
    pub pde: f64,
}

/// Boundary quantity for one `(N, k)`, averaged over replicas.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryRow {
    pub config_hash: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub quantity: &'static str,
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarySummary {
    pub config_hash: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    /// `max_x |empirical - pde|`.
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct StationaryReport {
    pub profile: Vec<ProfileRow>,
    pub boundary: Vec<BoundaryRow>,
    pub summary: Vec<StationarySummary>,
    /// `max |d_t u|` of the PDE steady state.
    pub steady_residual: f64,
}

impl StationaryReport {
    /// Mean of `quantity` for component `k`, one entry per `N`.
    pub fn boundary_series(&self, quantity: BoundaryQuantity, k: usize) -> Vec<f64> {
        self.boundary
            .iter()
            .filter(|r| r.k == k && r.quantity == quantity.name())
            .map(|r| r.mean)
            .collect()
    }
}

struct ReplicaOut {
    /// `[k][x1 - 1]`.
    profile: Vec<Vec<f64>>,
    /// `[k][quantity]`.
    boundary: Vec<Vec<f64>>,
}

/// Linear interpolation in `u_1` of the line-averaged field.
fn line_average_at(grid: &Grid, field: &[f64], u1: f64) -> f64 {
    let m = grid.m();
    let s = (u1 * m as f64).clamp(0.0, m as f64);
    let i = (s.floor() as usize).min(m - 1);
    let w = s - i as f64;
    let avg = |i: usize| {
        (0..grid.n_lines()).map(|l| field[grid.node(i, l)]).sum::<f64>() / grid.n_lines() as f64
    };
    (1.0 - w) * avg(i) + w * avg(i + 1)
}

/// Long runs from the initial profile: discard `burn_in`, average the
/// occupations over `window`, compare with the PDE steady state and record
/// the boundary quantities.
pub fn run_stationary(cfg: &ExperimentConfig, model: &Model) -> Result<StationaryReport> {
    let nb = &cfg.numerics;
    let dim = model.vs.dim();
    let solver = reference_solver(cfg, model)?;
    let mut state = solver.initialize(&model.initial)?;
    let steady_residual = solver.relax_to_steady(&mut state, nb.steady_tol, STEADY_T_MAX)?;
    let grid = *solver.grid();

    let hash = cfg.hash();
    let seed = cfg.seeds.root;
    let dynamics = model.dynamics();
    let mut report = StationaryReport {
        profile: Vec::new(),
        boundary: Vec::new(),
        summary: Vec::new(),
        steady_residual,
    };
    for &n in &nb.n {
        let lattice = Lattice::new(n, dim)?;
        let thetas = site_thetas(&model.thermo, &model.initial, &lattice)?;
        let stream = purpose(ExperimentKind::Stationary.tag(), n);
        let outs: Vec<ReplicaOut> = (0..nb.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(seed, stream, r as u32);
                let init = sample_from_thetas(lattice.clone(), &thetas, &mut rng);
                let mut sim = Simulator::new(&dynamics, init)?;
                sim.run_until(nb.burn_in, &mut [], &mut rng)?;
                let mut timer = OccupationTimer::new(sim.time(), sim.configuration());
                sim.run_until(nb.burn_in + nb.window, &mut [&mut timer], &mut rng)?;
                let occ = MeanOccupation::from_timer(&timer, lattice.clone(), model.vs.len());
                let n_tr = lattice.n_transverse() as f64;
                let profile = (0..=dim)
                    .map(|k| {
                        (1..n)
                            .map(|x1| {
                                (0..lattice.n_transverse())
                                    .map(|tr| conserved(&occ, &model.vs, lattice.site_at(x1, tr), k))
                                    .sum::<f64>()
                                    / n_tr
                            })
                            .collect()
                    })
                    .collect();
                let boundary = (0..=dim)
                    .map(|k| {
                        BoundaryQuantity::ALL
                            .iter()
                            .map(|&q| boundary_diagnostic(&occ, &model.vs, &model.boundary, k, q, &|_| 1.0, nb.eps))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                Ok(ReplicaOut { profile, boundary })
            })
            .collect::<Result<_>>()?;

        for k in 0..=dim {
            let mut gap = 0.0f64;
            for x1 in 1..n {
                let empirical = outs.iter().map(|o| o.profile[k][x1 - 1]).sum::<f64>() / outs.len() as f64;
                let u1 = x1 as f64 / n as f64;
                let pde = line_average_at(&grid, &state.fields[k], u1);
                gap = gap.max((empirical - pde).abs());
                report.profile.push(ProfileRow {
                    config_hash: hash.clone(),
                    seed,
                    n,
                    x1,
                    u1,
                    k,
                    empirical,
                    pde,
                });
            }
            report.summary.push(StationarySummary {
                config_hash: hash.clone(),
                seed,
                n,
                k,
                gap,
            });
            for (qi, q) in BoundaryQuantity::ALL.iter().enumerate() {
                let w: Welford = outs.iter().map(|o| o.boundary[k][qi]).collect();
                report.boundary.push(BoundaryRow {
                    config_hash: hash.clone(),
                    seed,
                    n,
                    k,
                    quantity: q.name(),
                    mean: w.mean,
                    std_err: w.std_err(),
                });
            }
        }
    }
    Ok(report)
}
