//! Solve the hydrodynamic system in d = 1 and relax it to the steady state.

use hydrolimit::dynamics::BoundaryData;
use hydrolimit::measures::SpatialProfile;
use hydrolimit::model::VelocitySet;
use hydrolimit::pde::{Scheme, Solver, SolverConfig};
use hydrolimit::thermo::Thermo;

fn main() -> hydrolimit::Result<()> {
    let vs = VelocitySet::default_for_dim(1)?;
    let thermo = Thermo::new(&vs);
    let boundary = BoundaryData::constant(1, &[0.7, 0.5], &[0.2, 0.3])?;
    let solver = Solver::new(&vs, &boundary, SolverConfig::with_stable_dt(1, 32, Scheme::Imex, 0.5))?;
    let profile = SpatialProfile::expression(1, &["1.2 - 0.6*x + 0.3*sin(pi*x)", "0.05 - 0.1*x"])?;
    profile.validate(&thermo, 1e-6)?;

    let traj = solver.solve(&profile, &[0.01, 0.05, 0.1])?;
    let grid = &traj.grid;
    for (t, frame) in traj.times.iter().zip(&traj.frames) {
        let mass = grid.integrate(&frame[0]);
        println!("t = {t:.2}: mass = {mass:.6}, rho(1/2) = {:.6}", frame[0][grid.m() / 2]);
    }

    let mut state = solver.initialize(&profile)?;
    let residual = solver.relax_to_steady(&mut state, 1e-8, 200.0)?;
    println!("steady state at t = {:.2} (residual {residual:.1e})", state.t);
    for i in (0..=grid.m()).step_by(8) {
        println!("  x = {:.3}: rho = {:.6}, p = {:+.6}", i as f64 / grid.m() as f64, state.fields[0][i], state.fields[1][i]);
    }
    Ok(())
}
