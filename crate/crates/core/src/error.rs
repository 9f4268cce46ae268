use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed velocity set: {0}")]
    MalformedVelocitySet(String),

    #[error("velocity set failed validation: {}", format_violations(.0))]
    InvalidVelocitySet(Vec<Violation>),

    #[error("local state has {got} bits but the velocity set has {expected} velocities")]
    SizeMismatch { expected: usize, got: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("thermodynamic point {point:?} is not in the interior domain (margin {margin:.3e})")]
    NotInDomain { point: Vec<f64>, margin: f64 },

    #[error("Newton inversion did not converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("enumeration of {bits} occupancy bits exceeds the limit of {limit}")]
    TooLarge { bits: usize, limit: usize },

    #[error("no block configuration attains the requested conserved vector")]
    EmptyHyperplane,

    #[error("invalid jump law: {0}")]
    InvalidJumpLaw(String),

    #[error("invalid boundary data: {0}")]
    InvalidBoundary(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("expression error in `{expr}`: {message}")]
    Expression { expr: String, message: String },

    #[error("total event rate is zero")]
    ZeroTotalRate,

    #[error("rate index drifted: stored {stored}, recomputed {recomputed}")]
    RateIndexDrift { stored: f64, recomputed: f64 },

    #[error("time step {dt:e} violates the explicit stability limit {limit:e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("chemical potential inversion failed at node {node}: {source}")]
    NodeInversion {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("test function does not vanish at the walls (max |H| = {0:.3e})")]
    NotVanishing(f64),

    #[error("Markov chain is reducible")]
    Reducible,

    #[error("function is not a probability density: {0}")]
    NotDensity(String),

    #[error("invalid snapshot: {0}")]
    Snapshot(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    IoPlain(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
