//! Experiment configs, replica orchestration and CSV/JSON output.
//!
//! Every CSV row carries the root seed and the config hash. Replica `r` of
//! an experiment at scale `N` draws from [`replica_rng`]`(root, purpose(kind, N), r)`,
//! and results are collected in replica order, so outputs do not depend on
//! the thread count.

mod checks;
mod config;
mod converge;
mod output;
mod stationary;
mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use checks::{
    law_agreement, max_weak_residual, richardson_order, run_diagnostics, run_ensembles, run_exact, run_pde_bench,
    scheme_agreement, sine_decay_rate, CheckRow, DiagnosticsReport, EnsembleReport, EnsembleRow, EnsembleSummary,
    ExactReport, LawAgreement, LawRow, PdeBenchReport, ReplacementRow, DEGENERATE_GAP,
};
pub use config::{ExperimentConfig, ExperimentKind, Model, ModelBlock, NumericsBlock, SeedsBlock, PROFILE_MARGIN};
pub use converge::{reference_solver, run_converge, ConvergeReport, ConvergeRow, ConvergeSummary};
pub use output::{write_csv, write_manifest, Manifest};
pub use stationary::{run_stationary, BoundaryRow, ProfileRow, StationaryReport, StationarySummary};
pub use stats::{purpose, replica_rng, Welford};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub enum Report {
    Converge(ConvergeReport),
    Stationary(StationaryReport),
    Ensembles(EnsembleReport),
    Exact(ExactReport),
    PdeBench(PdeBenchReport),
    Diagnostics(DiagnosticsReport),
}

/// Outcome of [`run`]: the typed report plus what goes into the manifest.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub report: Report,
    pub threads: usize,
    pub seconds: f64,
}

/// Run `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Validate `cfg` and run the experiment it names.
pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunRecord> {
    let model = cfg.validate()?;
    let start = Instant::now();
    let (report, used) = with_threads(threads, || {
        let used = rayon::current_num_threads();
        let report = match cfg.kind {
            ExperimentKind::Converge => run_converge(cfg, &model).map(Report::Converge),
            ExperimentKind::Stationary => run_stationary(cfg, &model).map(Report::Stationary),
            ExperimentKind::Ensembles => run_ensembles(cfg, &model).map(Report::Ensembles),
            ExperimentKind::Exact => run_exact(cfg, &model).map(Report::Exact),
            ExperimentKind::PdeBench => run_pde_bench(cfg, &model).map(Report::PdeBench),
            ExperimentKind::Diagnostics => run_diagnostics(cfg, &model).map(Report::Diagnostics),
        };
        (report, used)
    })?;
    Ok(RunRecord {
        config: cfg.clone(),
        report: report?,
        threads: used,
        seconds: start.elapsed().as_secs_f64(),
    })
}

impl RunRecord {
    /// Whether every check of the run passed. Runs without pass/fail checks
    /// report `None`.
    pub fn passed(&self) -> Option<bool> {
        let checks = match &self.report {
            Report::Exact(r) => &r.checks,
            Report::PdeBench(r) => &r.checks,
            _ => return None,
        };
        Some(checks.iter().all(|c| c.pass))
    }

    /// Write the CSV tables and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        output::ensure_dir(dir)?;
        let mut manifest = Manifest::new(&self.config, self.threads);
        manifest.timings.insert("total".into(), self.seconds);
        let mut files = Vec::new();
        let meta = &mut manifest.metadata;
        match &self.report {
            Report::Converge(r) => {
                files.push(write_csv(dir, "converge.csv", &r.rows)?);
                files.push(write_csv(dir, "converge_summary.csv", &r.summary)?);
                meta.insert("delta".into(), self.config.numerics.delta.into());
                meta.insert("pde_dt".into(), r.pde_dt.into());
                meta.insert("pde_clamps".into(), r.pde_clamps.into());
            }
            Report::Stationary(r) => {
                files.push(write_csv(dir, "stationary_profile.csv", &r.profile)?);
                files.push(write_csv(dir, "stationary_boundary.csv", &r.boundary)?);
                files.push(write_csv(dir, "stationary_summary.csv", &r.summary)?);
                meta.insert("steady_residual".into(), r.steady_residual.into());
            }
            Report::Ensembles(r) => {
                files.push(write_csv(dir, "ensembles.csv", &r.rows)?);
                files.push(write_csv(dir, "ensembles_summary.csv", &r.summary)?);
            }
            Report::Exact(r) => {
                files.push(write_csv(dir, "exact_checks.csv", &r.checks)?);
                files.push(write_csv(dir, "exact_law.csv", &r.law.rows)?);
            }
            Report::PdeBench(r) => {
                files.push(write_csv(dir, "pde_bench.csv", &r.checks)?);
            }
            Report::Diagnostics(r) => {
                files.push(write_csv(dir, "replacement.csv", &r.rows)?);
            }
        }
        manifest.files = files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let mut all = files;
        all.push(write_manifest(dir, &manifest)?);
        Ok(all)
    }

    /// Short human-readable summary lines.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.report {
            Report::Converge(r) => {
                for s in &r.summary {
                    out.push(format!(
                        "N = {:4}  e(N) = {:.5}  exceedance = {:.3}  (worst {} k={} t={})",
                        s.n, s.e, s.exceedance, s.worst_h, s.worst_k, s.worst_time
                    ));
                }
            }
            Report::Stationary(r) => {
                for s in &r.summary {
                    out.push(format!("N = {:4}  k = {}  sup gap = {:.5}", s.n, s.k, s.gap));
                }
                for b in &r.boundary {
                    out.push(format!(
                        "N = {:4}  k = {}  {:9} = {:+.5} ± {:.5}",
                        b.n, b.k, b.quantity, b.mean, b.std_err
                    ));
                }
            }
            Report::Ensembles(r) => {
                for s in &r.summary {
                    out.push(format!(
                        "{:4} v = {}  scaled gap in [{:.4e}, {:.4e}]  ratio = {:.3}{}",
                        s.observable,
                        s.v,
                        s.min_scaled,
                        s.max_scaled,
                        s.ratio,
                        if s.degenerate { "  (identically zero)" } else { "" }
                    ));
                }
            }
            Report::Exact(r) => out.extend(r.checks.iter().map(check_line)),
            Report::PdeBench(r) => out.extend(r.checks.iter().map(check_line)),
            Report::Diagnostics(r) => {
                let mut by: BTreeMap<(usize, usize, usize), Vec<String>> = BTreeMap::new();
                for row in &r.rows {
                    by.entry((row.n, row.j, row.k))
                        .or_default()
                        .push(format!("l={}: {:.5}", row.ell, row.mean));
                }
                for ((n, j, k), vals) in by {
                    out.push(format!("N = {n:4}  j = {j}  k = {k}  {}", vals.join("  ")));
                }
            }
        }
        out
    }
}

fn check_line(c: &CheckRow) -> String {
    format!(
        "[{}] {:32} {:.4e} {} {:.4e}",
        if c.pass { "pass" } else { "FAIL" },
        c.check,
        c.value,
        c.relation,
        c.bound
    )
}
