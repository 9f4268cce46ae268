//! Continuous-time simulation of the boundary-driven lattice gas.

mod boundary;
mod jump;
mod lattice;
mod rates;
mod sim;
mod snapshot;

pub use boundary::{flip_rate, BoundaryData, RESERVOIR_FLOOR};
pub use jump::{build_jump_law, JumpLaw};
pub use lattice::{Configuration, Lattice, Side};
pub use rates::{neumaier, EventClass, RateIndex, SumTree};
pub use sim::{
    boundary_flip_rate, exclusion_rate, simulate, Dynamics, Event, GeneratorParts,
    OccupationTimer, Observer, Simulator, SnapshotRecorder, INTEGRITY_INTERVAL,
};
pub use snapshot::{Snapshot, SnapshotData};
