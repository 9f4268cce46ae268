use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{simulate, BoundaryData, Dynamics, GeneratorParts, Lattice, Side};
use crate::empirical::{replacement_diagnostic, trig_basis, TestFunction};
use crate::error::{Error, Result};
use crate::exactcheck::{
    check_detailed_balance, entropy_production, propagate, stationary_distribution, total_variation, ExactSystem,
};
use crate::grid::Grid;
use crate::measures::{ensembles_gap, sample_from_thetas, BlockIndex, BlockState, SpatialProfile};
use crate::pde::{weak_residual, Scheme, Solver, SolverConfig};
use crate::thermo::ThermoPoint;

use super::config::{ExperimentConfig, ExperimentKind, Model};
use super::stats::{purpose, replica_rng, Welford};

/// Below this, a canonical/grand-canonical gap counts as identically zero.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// A named numerical check against a bound.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub config_hash: String,
    pub seed: u64,
    pub check: String,
    pub value: f64,
    pub bound: f64,
    /// `<=` or `>`.
    pub relation: &'static str,
    pub pass: bool,
}

impl CheckRow {
    fn at_most(cfg: &ExperimentConfig, check: &str, value: f64, bound: f64) -> Self {
        Self::new(cfg, check, value, bound, "<=", value <= bound)
    }

    fn above(cfg: &ExperimentConfig, check: &str, value: f64, bound: f64) -> Self {
        Self::new(cfg, check, value, bound, ">", value > bound)
    }

    fn new(cfg: &ExperimentConfig, check: &str, value: f64, bound: f64, relation: &'static str, pass: bool) -> Self {
        Self {
            config_hash: cfg.hash(),
            seed: cfg.seeds.root,
            check: check.into(),
            value,
            bound,
            relation,
            pass,
        }
    }
}

/// Left reservoir densities at the transverse origin, used wherever a
/// matching (equilibrium) boundary is needed.
fn equilibrium_thetas(model: &Model) -> Vec<f64> {
    model.boundary.densities(Side::Left, &vec![0.0; model.vs.dim() - 1])
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleRow {
    pub config_hash: String,
    pub seed: u64,
    #[serde(rename = "L")]
    pub outer: usize,
    pub ell: usize,
    pub observable: String,
    pub v: usize,
    pub canonical: f64,
    pub grand_canonical: f64,
    pub gap: f64,
    /// `gap |Lambda_L|`.
    pub scaled_gap: f64,
    pub constant: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnsembleSummary {
    pub config_hash: String,
    pub seed: u64,
    pub observable: String,
    pub v: usize,
    pub min_scaled: f64,
    pub max_scaled: f64,
    /// `max / min` of the scaled gap over `L`; 1 when degenerate.
    pub ratio: f64,
    /// Every gap below [`DEGENERATE_GAP`].
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct EnsembleReport {
    pub rows: Vec<EnsembleRow>,
    pub summary: Vec<EnsembleSummary>,
}

/// Per-velocity counts on `Lambda_L` closest to the densities of the
/// initial profile at the centre of the domain.
fn block_counts(model: &Model, outer: usize) -> Result<Vec<i64>> {
    let d = model.vs.dim();
    let mut centre = vec![0.0; d];
    centre[0] = 0.5;
    let lambda = model.thermo.inverse_lambda(&model.initial.eval(&centre))?;
    let sites = (2 * outer + 1).pow(d as u32) as f64;
    Ok(model
        .thermo
        .thetas(&lambda)
        .iter()
        .map(|th| (th * sites).round() as i64)
        .collect())
}

/// Canonical versus grand canonical expectations of `xi(0, v)` and of the
/// two-site product `xi(0, v) xi(e_1, v)` for every outer block size.
pub fn run_ensembles(cfg: &ExperimentConfig, model: &Model) -> Result<EnsembleReport> {
    let nb = &cfg.numerics;
    let d = model.vs.dim();
    let ell = nb.inner;
    let origin = vec![0i64; d];
    let mut e1 = origin.clone();
    e1[0] = 1;
    let mut rows = Vec::new();
    for &outer in &nb.outer {
        let index = BlockIndex::from_counts(&model.vs, outer, &block_counts(model, outer)?);
        for v in 0..model.vs.len() {
            let mut observables: Vec<(String, Box<dyn Fn(&BlockState) -> f64>)> = Vec::new();
            let o = origin.clone();
            observables.push(("site".into(), Box::new(move |s| s.at(&o, v) as u8 as f64)));
            if ell >= 1 {
                let (o, e) = (origin.clone(), e1.clone());
                observables.push((
                    "pair".into(),
                    Box::new(move |s| (s.at(&o, v) && s.at(&e, v)) as u8 as f64),
                ));
            }
            for (name, f) in &observables {
                let g = ensembles_gap(&model.vs, &model.thermo, ell, &index, f)?;
                rows.push(EnsembleRow {
                    config_hash: cfg.hash(),
                    seed: cfg.seeds.root,
                    outer,
                    ell,
                    observable: name.clone(),
                    v,
                    canonical: g.canonical,
                    grand_canonical: g.grand_canonical,
                    gap: g.gap,
                    scaled_gap: g.gap * g.outer_sites as f64,
                    constant: g.constant,
                });
            }
        }
    }
    let mut summary = Vec::new();
    for name in ["site", "pair"] {
        for v in 0..model.vs.len() {
            let sel: Vec<&EnsembleRow> = rows.iter().filter(|r| r.observable == name && r.v == v).collect();
            if sel.is_empty() {
                continue;
            }
            let degenerate = sel.iter().all(|r| r.gap < DEGENERATE_GAP);
            let min = sel.iter().map(|r| r.scaled_gap).fold(f64::INFINITY, f64::min);
            let max = sel.iter().map(|r| r.scaled_gap).fold(0.0, f64::max);
            summary.push(EnsembleSummary {
                config_hash: cfg.hash(),
                seed: cfg.seeds.root,
                observable: name.into(),
                v,
                min_scaled: min,
                max_scaled: max,
                ratio: if degenerate { 1.0 } else { max / min },
                degenerate,
            });
        }
    }
    Ok(EnsembleReport { rows, summary })
}

/// Observed and predicted visit counts of one state.
#[derive(Clone, Debug, Serialize)]
pub struct LawRow {
    pub config_hash: String,
    pub seed: u64,
    pub state: usize,
    pub count: u64,
    pub expected: f64,
    pub sigma: f64,
    pub within: bool,
}

#[derive(Clone, Debug)]
pub struct LawAgreement {
    pub rows: Vec<LawRow>,
    /// States whose count lies within three binomial standard deviations.
    pub within: usize,
    pub n_states: usize,
}

/// Simulate `replicas` copies of the process from state `start` up to time
/// `t` and compare the empirical law with `start exp(tQ)`.
pub fn law_agreement(
    cfg: &ExperimentConfig,
    system: &ExactSystem,
    dynamics: &Dynamics,
    start: usize,
    t: f64,
    replicas: usize,
) -> Result<LawAgreement> {
    let q = system.generator(dynamics.parts);
    let mut mu0 = vec![0.0; system.n_states()];
    mu0[start] = 1.0;
    let law = propagate(&mu0, &q, t);
    let stream = purpose(ExperimentKind::Exact.tag(), system.lattice().n());
    let finals: Vec<usize> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seeds.root, stream, r as u32);
            let end = simulate(dynamics, system.configuration(start), t, &mut [], &mut rng)?;
            Ok(system.code(&end))
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; system.n_states()];
    for s in finals {
        counts[s] += 1;
    }
    let r = replicas as f64;
    let rows: Vec<LawRow> = counts
        .iter()
        .zip(&law)
        .enumerate()
        .map(|(state, (&count, &p))| {
            let p = p.clamp(0.0, 1.0);
            let expected = r * p;
            let sigma = (r * p * (1.0 - p)).sqrt();
            LawRow {
                config_hash: cfg.hash(),
                seed: cfg.seeds.root,
                state,
                count,
                expected,
                sigma,
                within: (count as f64 - expected).abs() <= 3.0 * sigma,
            }
        })
        .collect();
    Ok(LawAgreement {
        within: rows.iter().filter(|r| r.within).count(),
        n_states: rows.len(),
        rows,
    })
}

#[derive(Clone, Debug)]
pub struct ExactReport {
    pub checks: Vec<CheckRow>,
    pub law: LawAgreement,
}

impl ExactReport {
    pub fn check(&self, name: &str) -> Option<&CheckRow> {
        self.checks.iter().find(|c| c.check == name)
    }
}

fn parts(text: &str) -> GeneratorParts {
    GeneratorParts::parse(text).expect("fixed part list")
}

/// Stationarity, reversibility and simulator-law checks on the tiny system
/// of scale `exact_n`.
pub fn run_exact(cfg: &ExperimentConfig, model: &Model) -> Result<ExactReport> {
    let nb = &cfg.numerics;
    let d = model.vs.dim();
    let theta = equilibrium_thetas(model);
    let matching = BoundaryData::constant(d, &theta, &theta)?;
    let sys = ExactSystem::new(nb.exact_n, &model.vs, &model.law, &matching)?;
    let nu = sys.uniform_product(&theta);
    let mut checks = Vec::new();

    let q = sys.generator(parts("ex1,c,b"));
    let pi = stationary_distribution(&q)?;
    checks.push(CheckRow::at_most(cfg, "product_stationary_ex1_c_b", total_variation(&pi, &nu), 1e-10));
    checks.push(CheckRow::at_most(
        cfg,
        "detailed_balance_b",
        check_detailed_balance(&sys.generator(parts("b")), &nu),
        1e-12,
    ));
    let mut mean = ThermoPoint(vec![0.0; d + 1]);
    for (v, th) in theta.iter().enumerate() {
        for k in 0..=d {
            mean.0[k] += th * model.vs.extended(v, k);
        }
    }
    let gibbs = sys.uniform_product(&model.thermo.thetas(&model.thermo.inverse_lambda(&mean)?));
    checks.push(CheckRow::at_most(
        cfg,
        "detailed_balance_c",
        check_detailed_balance(&sys.generator(parts("c")), &gibbs),
        1e-12,
    ));
    let q_all = sys.generator(GeneratorParts::ALL);
    let pi_all = stationary_distribution(&q_all)?;
    checks.push(CheckRow::above(
        cfg,
        "reversibility_broken_by_ex2",
        check_detailed_balance(&q_all, &pi_all),
        1e-3,
    ));
    let times: Vec<f64> = (0..=20).map(|i| 0.025 * i as f64).collect();
    let mut mu0 = vec![0.0; sys.n_states()];
    mu0[sys.n_states() / 3] = 1.0;
    let h = entropy_production(&mu0, &q, &nu, &times);
    let rise = h.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    checks.push(CheckRow::at_most(cfg, "entropy_nonincreasing", rise, 1e-12));

    let system = ExactSystem::new(nb.exact_n, &model.vs, &model.law, &model.boundary)?;
    let law = law_agreement(cfg, &system, &model.dynamics(), system.n_states() / 3, nb.t_end, nb.replicas)?;
    let need = (law.n_states * 15).div_ceil(16);
    checks.push(CheckRow::new(
        cfg,
        "simulator_law_within_3_sigma",
        law.within as f64,
        need as f64,
        ">=",
        law.within >= need,
    ));
    Ok(ExactReport { checks, law })
}

/// Map from the nodes of `coarse` to the coinciding nodes of `fine`.
fn coinciding_nodes(coarse: &Grid, fine: &Grid) -> Result<Vec<usize>> {
    let ratio = fine.m() / coarse.m();
    if ratio * coarse.m() != fine.m() {
        return Err(Error::Contract("fine grid does not refine the coarse grid".into()));
    }
    let key = |g: &Grid, node: usize, scale: usize| -> Vec<usize> {
        let mut k = vec![g.i(node) * scale];
        k.extend(g.line_coords(g.line(node)).iter().map(|c| c * scale));
        k
    };
    let lookup: HashMap<Vec<usize>, usize> = (0..fine.n_nodes()).map(|n| (key(fine, n, 1), n)).collect();
    Ok((0..coarse.n_nodes()).map(|n| lookup[&key(coarse, n, ratio)]).collect())
}

fn final_fields(model: &Model, sc: SolverConfig, t: f64) -> Result<(Grid, Vec<Vec<f64>>)> {
    let solver = Solver::new(&model.vs, &model.boundary, sc)?;
    let traj = solver.solve(&model.initial, &[t])?;
    Ok((traj.grid, traj.final_fields().to_vec()))
}

fn max_difference(a: &[Vec<f64>], b: &[Vec<f64>], map: &[usize]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(fa, fb)| map.iter().enumerate().map(move |(i, &j)| (fa[i] - fb[j]).abs()))
        .fold(0.0, f64::max)
}

/// Observed spatial order from grids `m0, 2 m0, 4 m0` with explicit steps at
/// half the stability limit, at time `t`.
pub fn richardson_order(model: &Model, m0: usize, t: f64) -> Result<f64> {
    let d = model.vs.dim();
    let sols = [m0, 2 * m0, 4 * m0]
        .iter()
        .map(|&m| final_fields(model, SolverConfig::with_stable_dt(d, m, Scheme::Explicit, 0.5), t))
        .collect::<Result<Vec<_>>>()?;
    let e1 = max_difference(&sols[0].1, &sols[1].1, &coinciding_nodes(&sols[0].0, &sols[1].0)?);
    let e2 = max_difference(&sols[1].1, &sols[2].1, &coinciding_nodes(&sols[1].0, &sols[2].0)?);
    Ok((e1 / e2).log2())
}

/// Largest nodal difference between the explicit and IMEX schemes on the
/// same grid and time step (a quarter of the explicit limit).
pub fn scheme_agreement(model: &Model, m: usize, t: f64) -> Result<f64> {
    let d = model.vs.dim();
    let (grid, a) = final_fields(model, SolverConfig::with_stable_dt(d, m, Scheme::Explicit, 0.25), t)?;
    let (_, b) = final_fields(model, SolverConfig::with_stable_dt(d, m, Scheme::Imex, 0.25), t)?;
    let id: Vec<usize> = (0..grid.n_nodes()).collect();
    Ok(max_difference(&a, &b, &id))
}

/// Largest weak-form defect over the trigonometric basis and the components,
/// from a run on `m` cells recorded at `frames + 1` equispaced times.
pub fn max_weak_residual(model: &Model, m: usize, t: f64, frames: usize) -> Result<f64> {
    let d = model.vs.dim();
    let solver = Solver::new(&model.vs, &model.boundary, SolverConfig::with_stable_dt(d, m, Scheme::Explicit, 0.5))?;
    let times: Vec<f64> = (0..=frames).map(|i| t * i as f64 / frames as f64).collect();
    let traj = solver.solve(&model.initial, &times)?;
    let mut worst = 0.0f64;
    for h in trig_basis(d) {
        for k in 0..=d {
            worst = worst.max(weak_residual(&solver, &traj, &h as &dyn TestFunction, k)?);
        }
    }
    Ok(worst)
}

/// Decay rate of a small `sin(pi u_1)` perturbation of a uniform state under
/// the pure diffusion on `m` cells, measured over `[0, t]`.
pub fn sine_decay_rate(dim: usize, m: usize, t: f64) -> Result<f64> {
    let vs = crate::model::VelocitySet::default_for_dim(dim)?;
    let bd = BoundaryData::uniform(dim, &vec![0.4; vs.len()])?;
    let base = bd.wall_value(&vs, Side::Left, &vec![0.0; dim - 1]);
    let mut exprs: Vec<String> = base.0.iter().map(|c| format!("{c}")).collect();
    exprs[0] = format!("{} + 0.05*sin(pi*u1)", base.0[0]);
    let profile = SpatialProfile::expression(dim, &exprs)?;
    let cfg = SolverConfig {
        flux: false,
        ..SolverConfig::with_stable_dt(dim, m, Scheme::Explicit, 0.4)
    };
    let solver = Solver::new(&vs, &bd, cfg)?;
    let traj = solver.solve(&profile, &[0.0, t])?;
    let grid = traj.grid;
    let w = grid.quadrature_weights();
    let amplitude = |f: &[f64]| -> f64 {
        (0..grid.n_nodes())
            .map(|n| w[n] * (f[n] - base.0[0]) * (std::f64::consts::PI * grid.point(n)[0]).sin())
            .sum()
    };
    Ok((amplitude(&traj.frames[0][0]) / amplitude(&traj.frames[1][0])).ln() / t)
}

#[derive(Clone, Debug)]
pub struct PdeBenchReport {
    pub checks: Vec<CheckRow>,
}

/// Refinement study on the configured model with base grid `pde_m`.
pub fn run_pde_bench(cfg: &ExperimentConfig, model: &Model) -> Result<PdeBenchReport> {
    let nb = &cfg.numerics;
    let m = nb.pde_m;
    let t = nb.t_end;
    let mut checks = Vec::new();
    let order = richardson_order(model, m, t)?;
    checks.push(CheckRow::new(cfg, "richardson_order", order, 2.0, "in [1.8, 2.2]", (1.8..=2.2).contains(&order)));
    checks.push(CheckRow::at_most(cfg, "explicit_vs_imex", scheme_agreement(model, 4 * m, t)?, 1e-4));
    let r1 = max_weak_residual(model, m, t, 40)?;
    let r2 = max_weak_residual(model, 2 * m, t, 40)?;
    checks.push(CheckRow::at_most(cfg, "weak_residual_coarse", r1, f64::INFINITY));
    checks.push(CheckRow::at_most(cfg, "weak_residual_fine", r2, r1));
    let rate = sine_decay_rate(model.vs.dim(), m, t)?;
    let exact = std::f64::consts::PI.powi(2) / 2.0;
    checks.push(CheckRow::at_most(cfg, "sine_decay_relative_error", (rate - exact).abs() / exact, 0.01));
    Ok(PdeBenchReport { checks })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplacementRow {
    pub config_hash: String,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub ell: usize,
    pub j: usize,
    pub k: usize,
    pub mean: f64,
    pub std_err: f64,
    pub blocks: usize,
    pub clamped: usize,
}

#[derive(Clone, Debug)]
pub struct DiagnosticsReport {
    pub rows: Vec<ReplacementRow>,
}

impl DiagnosticsReport {
    /// Mean replacement diagnostic over `ell`, for one `(N, j, k)`.
    pub fn series(&self, n: usize, j: usize, k: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.n == n && r.j == j && r.k == k)
            .map(|r| r.mean)
            .collect()
    }
}

/// Replacement diagnostic at equilibrium: sample the product measure of the
/// left reservoir, run the dynamics with both reservoirs at that density up
/// to `t_end`, and evaluate every `(ell, j, k)`.
pub fn run_diagnostics(cfg: &ExperimentConfig, model: &Model) -> Result<DiagnosticsReport> {
    let nb = &cfg.numerics;
    let d = model.vs.dim();
    let theta = equilibrium_thetas(model);
    let dynamics = Dynamics {
        boundary: BoundaryData::constant(d, &theta, &theta)?,
        ..model.dynamics()
    };
    let mut rows = Vec::new();
    for &n in &nb.n {
        let lattice = Lattice::new(n, d)?;
        let thetas = vec![theta.clone(); lattice.n_sites()];
        let stream = purpose(ExperimentKind::Diagnostics.tag(), n);
        // [replica][ell][j][k]
        let per: Vec<Vec<Vec<Vec<(f64, usize, usize)>>>> = (0..nb.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(cfg.seeds.root, stream, r as u32);
                let init = sample_from_thetas(lattice.clone(), &thetas, &mut rng);
                let config = simulate(&dynamics, init, nb.t_end, &mut [], &mut rng)?;
                nb.ell
                    .iter()
                    .map(|&ell| {
                        (1..=d)
                            .map(|j| {
                                (0..=d)
                                    .map(|k| {
                                        let rep = replacement_diagnostic(
                                            &config,
                                            &model.vs,
                                            &model.thermo,
                                            &model.law,
                                            ell,
                                            j,
                                            k,
                                        )?;
                                        Ok((rep.value, rep.blocks, rep.clamped))
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        for (li, &ell) in nb.ell.iter().enumerate() {
            for j in 1..=d {
                for k in 0..=d {
                    let w: Welford = per.iter().map(|p| p[li][j - 1][k].0).collect();
                    rows.push(ReplacementRow {
                        config_hash: cfg.hash(),
                        seed: cfg.seeds.root,
                        n,
                        ell,
                        j,
                        k,
                        mean: w.mean,
                        std_err: w.std_err(),
                        blocks: per.first().map_or(0, |p| p[li][j - 1][k].1),
                        clamped: per.iter().map(|p| p[li][j - 1][k].2).sum(),
                    });
                }
            }
        }
    }
    Ok(DiagnosticsReport { rows })
}
