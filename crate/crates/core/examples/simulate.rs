//! One replica of the open lattice gas in d = 1, with snapshots of the
//! velocity densities along the way.

use hydrolimit::dynamics::{
    build_jump_law, simulate, BoundaryData, Dynamics, GeneratorParts, Lattice, SnapshotRecorder,
};
use hydrolimit::harness::replica_rng;
use hydrolimit::measures::{sample_associated, SpatialProfile};
use hydrolimit::model::VelocitySet;
use hydrolimit::thermo::{Thermo, ThermoPoint};

fn main() -> hydrolimit::Result<()> {
    let vs = VelocitySet::default_for_dim(1)?;
    let thermo = Thermo::new(&vs);
    let law = build_jump_law(&vs)?;
    let boundary = BoundaryData::constant(1, &[0.7, 0.5], &[0.2, 0.3])?;
    let n = 64;
    let dynamics = Dynamics {
        vs: vs.clone(),
        law,
        boundary,
        parts: GeneratorParts::ALL,
    };

    let profile = SpatialProfile::constant(1, ThermoPoint::new(0.8, &[0.0]))?;
    let mut rng = replica_rng(7, 0, 0);
    let init = sample_associated(&thermo, &profile, Lattice::new(n, 1)?, &mut rng)?;

    let mut snaps = SnapshotRecorder::new(vec![0.05, 0.1]);
    let end = simulate(&dynamics, init, 0.1, &mut [&mut snaps], &mut rng)?;
    for (t, config) in &snaps.snapshots {
        let mass: usize = (0..config.n_sites()).map(|s| config.word(s).count_ones() as usize).sum();
        println!("t = {t:.2}: {mass} particles on {} sites", config.n_sites());
    }
    println!("final configuration has {} sites", end.n_sites());
    Ok(())
}
