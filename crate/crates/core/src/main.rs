use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use hydrolimit::dynamics::{simulate, Lattice, Snapshot, SnapshotRecorder};
use hydrolimit::empirical::{trig_basis, write_pairing_csv, PairingRecorder, TestFunction};
use hydrolimit::harness::{self, reference_solver, replica_rng, ExperimentConfig, ExperimentKind};
use hydrolimit::measures::sample_associated;
use hydrolimit::{Error, Result};

#[derive(Parser)]
#[command(name = "hydrolimit", version, about = "Lattice gas simulations, hydrodynamic PDE and exact checks")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print its hash.
    Validate,
    /// Run one replica of the particle system and write snapshots and pairings.
    Simulate {
        /// Lattice scale; the first configured one when absent.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Solve the PDE at the snapshot times, or run the refinement study.
    Pde {
        #[arg(long)]
        bench: bool,
    },
    Converge,
    Stationary,
    Ensembles,
    Exact,
    Diagnostics,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seeds.root = seed;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn experiment(cli: &Cli, mut cfg: ExperimentConfig, kind: ExperimentKind) -> Result<bool> {
    cfg.kind = kind;
    let record = harness::run(&cfg, cli.threads)?;
    for line in record.summary_lines() {
        println!("{line}");
    }
    let files = record.write(&cli.out)?;
    println!("wrote {} files to {}", files.len(), cli.out.display());
    Ok(record.passed().unwrap_or(true))
}

fn run_simulate(cli: &Cli, cfg: &ExperimentConfig, n: Option<usize>) -> Result<()> {
    let model = cfg.validate()?;
    let n = n.unwrap_or(cfg.numerics.n[0]);
    let lattice = Lattice::new(n, model.vs.dim())?;
    let mut rng = replica_rng(cfg.seeds.root, 0, 0);
    let init = sample_associated(&model.thermo, &model.initial, lattice, &mut rng)?;
    let times = cfg.numerics.times();
    let basis: Vec<Arc<dyn TestFunction>> = trig_basis(model.vs.dim())
        .into_iter()
        .map(|h| Arc::new(h) as Arc<dyn TestFunction>)
        .collect();
    let mut pairings = PairingRecorder::new(model.vs.clone(), basis, times.clone());
    let mut snaps = SnapshotRecorder::new(times);
    simulate(
        &model.dynamics(),
        init,
        cfg.numerics.t_end,
        &mut [&mut pairings, &mut snaps],
        &mut rng,
    )?;
    ensure_dir(&cli.out)?;
    for (i, (t, config)) in snaps.snapshots.iter().enumerate() {
        let snap = Snapshot::from_configuration(config, &model.vs, *t);
        snap.write_binary(create(&cli.out.join(format!("snapshot_{i:03}.bin")))?)?;
        std::fs::write(cli.out.join(format!("snapshot_{i:03}.json")), snap.to_json()?)?;
    }
    write_pairing_csv(
        &pairings.into_series(n, cfg.seeds.root),
        create(&cli.out.join("pairings.csv"))?,
    )?;
    println!("N = {n}: {} snapshots written to {}", snaps.snapshots.len(), cli.out.display());
    Ok(())
}

fn run_pde(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.validate()?;
    let solver = reference_solver(cfg, &model)?;
    let traj = solver.solve(&model.initial, &cfg.numerics.times())?;
    ensure_dir(&cli.out)?;
    traj.write_csv(create(&cli.out.join("pde.csv"))?)?;
    for (i, snap) in traj.snapshots(&model.vs).iter().enumerate() {
        std::fs::write(cli.out.join(format!("pde_{i:03}.json")), snap.to_json()?)?;
    }
    println!(
        "M = {}, dt = {:e}: {} steps, {} clamps",
        solver.grid().m(),
        solver.config().dt,
        traj.steps,
        traj.clamps
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Validate => {
            let model = cfg.validate()?;
            println!(
                "{}: {} (d = {}, |V| = {}), hash {}",
                cfg.id(),
                cfg.kind.name(),
                model.vs.dim(),
                model.vs.len(),
                cfg.hash()
            );
            Ok(true)
        }
        Command::Simulate { n } => run_simulate(cli, &cfg, *n).map(|_| true),
        Command::Pde { bench: false } => run_pde(cli, &cfg).map(|_| true),
        Command::Pde { bench: true } => experiment(cli, cfg, ExperimentKind::PdeBench),
        Command::Converge => experiment(cli, cfg, ExperimentKind::Converge),
        Command::Stationary => experiment(cli, cfg, ExperimentKind::Stationary),
        Command::Ensembles => experiment(cli, cfg, ExperimentKind::Ensembles),
        Command::Exact => experiment(cli, cfg, ExperimentKind::Exact),
        Command::Diagnostics => experiment(cli, cfg, ExperimentKind::Diagnostics),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
