use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{build_jump_law, BoundaryData, Dynamics, GeneratorParts, JumpLaw, Side};
use crate::error::{Error, Result};
use crate::measures::SpatialProfile;
use crate::model::VelocitySet;
use crate::pde::Scheme;
use crate::thermo::Thermo;

/// Minimum distance to the domain boundary required of initial profiles.
pub const PROFILE_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Converge,
    Stationary,
    Ensembles,
    Exact,
    PdeBench,
    Diagnostics,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Converge => "converge",
            Self::Stationary => "stationary",
            Self::Ensembles => "ensembles",
            Self::Exact => "exact",
            Self::PdeBench => "pde-bench",
            Self::Diagnostics => "diagnostics",
        }
    }

    /// Stable tag mixed into the random stream index.
    pub(crate) fn tag(self) -> u32 {
        match self {
            Self::Converge => 1,
            Self::Stationary => 2,
            Self::Ensembles => 3,
            Self::Exact => 4,
            Self::PdeBench => 5,
            Self::Diagnostics => 6,
        }
    }
}

/// Model description. Reservoir densities are one expression per velocity in
/// `u1..ud` (with `u1` at the wall); the initial profile is one expression
/// per conserved component `rho, p1, ..., pd` in `u1..ud` (aliases `x, y, z`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub dim: usize,
    /// Velocity set file; the default set for `dim` when absent. Relative
    /// paths are resolved against the config file.
    #[serde(default)]
    pub velocities: Option<PathBuf>,
    pub alpha: Vec<String>,
    pub beta: Vec<String>,
    /// Linear interpolation between the wall values when absent.
    #[serde(default)]
    pub initial: Option<Vec<String>>,
    #[serde(default = "default_parts")]
    pub parts: String,
}

fn default_parts() -> String {
    "all".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsBlock {
    /// Lattice scales.
    pub n: Vec<usize>,
    /// Replicas per scale.
    pub replicas: usize,
    pub t_end: f64,
    /// Observation times; `[t_end]` when empty.
    pub snapshot_times: Vec<f64>,
    pub pde_m: usize,
    /// PDE time step; a fraction of the explicit limit when absent.
    pub pde_dt: Option<f64>,
    pub scheme: Scheme,
    /// Exceedance threshold.
    pub delta: f64,
    /// Stationary runs: time discarded before averaging.
    pub burn_in: f64,
    /// Stationary runs: averaging window.
    pub window: f64,
    /// Width of the block boundary quantities, as a fraction of `N`.
    pub eps: f64,
    /// Block half-widths for the replacement diagnostic.
    pub ell: Vec<usize>,
    /// Outer block half-widths for the ensemble comparison.
    pub outer: Vec<usize>,
    /// Inner block half-width for the ensemble comparison.
    pub inner: usize,
    /// Tolerance on `max |d_t u|` for the PDE steady state.
    pub steady_tol: f64,
    /// Tiny-system scale for the exact checks.
    pub exact_n: usize,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            n: vec![32, 64, 128],
            replicas: 200,
            t_end: 0.1,
            snapshot_times: Vec::new(),
            pde_m: 256,
            pde_dt: None,
            scheme: Scheme::Imex,
            delta: 0.05,
            burn_in: 0.5,
            window: 2.0,
            eps: 0.25,
            ell: vec![2, 4, 8],
            outer: vec![2, 3, 4],
            inner: 1,
            steady_tol: 1e-8,
            exact_n: 3,
        }
    }
}

impl NumericsBlock {
    pub fn times(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![self.t_end]
        } else {
            self.snapshot_times.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsBlock {
    pub root: u64,
}

/// A named experiment read from TOML.
///
/// ```toml
/// kind = "converge"
/// [model]
/// dim = 1
/// alpha = ["0.6", "0.4"]
/// beta = ["0.3", "0.2"]
/// [numerics]
/// n = [32, 64]
/// [seeds]
/// root = 7
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub id: Option<String>,
    pub model: ModelBlock,
    #[serde(default)]
    pub numerics: NumericsBlock,
    #[serde(default)]
    pub seeds: SeedsBlock,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Build the model and check the numerics block.
    pub fn validate(&self) -> Result<Model> {
        let model = Model::build(&self.model, self.base_dir.as_deref())?;
        let nb = &self.numerics;
        let bad = |msg: String| Err(Error::Config(msg));
        if nb.n.is_empty() || nb.n.iter().any(|&n| n < 2) {
            return bad(format!("lattice scales must be at least 2, got {:?}", nb.n));
        }
        if nb.replicas == 0 || nb.replicas > u32::MAX as usize {
            return bad(format!("replica count {} out of range", nb.replicas));
        }
        if !(nb.t_end >= 0.0 && nb.t_end.is_finite()) {
            return bad(format!("t_end = {} must be finite and non-negative", nb.t_end));
        }
        let times = nb.times();
        if times.iter().any(|t| !(*t >= 0.0 && *t <= nb.t_end)) || times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("snapshot times must increase strictly within [0, t_end]".into());
        }
        if nb.pde_m < 2 {
            return bad(format!("PDE grid needs at least 2 cells, got {}", nb.pde_m));
        }
        if let Some(dt) = nb.pde_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("pde_dt = {dt} must be positive"));
            }
        }
        if !(nb.delta > 0.0) || !(nb.eps > 0.0 && nb.eps < 1.0) {
            return bad(format!("delta = {} and eps = {} out of range", nb.delta, nb.eps));
        }
        if !(nb.burn_in >= 0.0 && nb.window > 0.0) {
            return bad("stationary runs need burn_in >= 0 and window > 0".into());
        }
        if nb.ell.is_empty() || nb.ell.contains(&0) {
            return bad("block half-widths must be positive".into());
        }
        if nb.outer.iter().any(|&l| l < nb.inner) {
            return bad("outer ensemble blocks must contain the inner block".into());
        }
        if !(nb.steady_tol > 0.0) || nb.exact_n < 2 {
            return bad("steady_tol must be positive and exact_n at least 2".into());
        }
        Ok(model)
    }
}

/// Everything built from a [`ModelBlock`].
#[derive(Clone, Debug)]
pub struct Model {
    pub vs: VelocitySet,
    pub law: JumpLaw,
    pub boundary: BoundaryData,
    pub parts: GeneratorParts,
    pub thermo: Thermo,
    pub initial: SpatialProfile,
}

impl Model {
    pub fn build(block: &ModelBlock, base: Option<&Path>) -> Result<Self> {
        let vs = match &block.velocities {
            Some(p) => {
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.clone(),
                };
                VelocitySet::load(&path)?
            }
            None => VelocitySet::default_for_dim(block.dim)?,
        };
        if vs.dim() != block.dim {
            return Err(Error::Config(format!(
                "velocity set has dimension {}, model declares {}",
                vs.dim(),
                block.dim
            )));
        }
        let law = build_jump_law(&vs)?;
        let boundary = BoundaryData::from_strings(block.dim, &block.alpha, &block.beta)?;
        if boundary.n_velocities() != vs.len() {
            return Err(Error::InvalidBoundary(format!(
                "{} reservoir densities for {} velocities",
                boundary.n_velocities(),
                vs.len()
            )));
        }
        let parts = GeneratorParts::parse(&block.parts)?;
        let thermo = Thermo::new(&vs);
        let initial = match &block.initial {
            Some(exprs) => SpatialProfile::expression(block.dim, exprs)?,
            None => {
                let origin = vec![0.0; block.dim - 1];
                SpatialProfile::linear_x1(
                    block.dim,
                    boundary.wall_value(&vs, Side::Left, &origin),
                    boundary.wall_value(&vs, Side::Right, &origin),
                )?
            }
        };
        initial.validate(&thermo, PROFILE_MARGIN)?;
        Ok(Self {
            vs,
            law,
            boundary,
            parts,
            thermo,
            initial,
        })
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics {
            vs: self.vs.clone(),
            law: self.law.clone(),
            boundary: self.boundary.clone(),
            parts: self.parts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "converge"
[model]
dim = 1
alpha = ["0.6", "0.4"]
beta = ["0.3", "0.2"]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.numerics.n, vec![32, 64, 128]);
        assert_eq!(cfg.numerics.times(), vec![0.1]);
        assert_eq!(cfg.model.parts, "all");
        let m = cfg.validate().unwrap();
        assert_eq!(m.vs.len(), 2);
        assert_eq!(cfg.id(), "converge");
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.seeds.root = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("converge", "nope")).is_err());
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.numerics.snapshot_times = vec![0.05, 0.2];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.model.initial = Some(vec!["2.5".into(), "0".into()]);
        assert!(matches!(cfg.validate(), Err(Error::NotInDomain { .. })));
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.model.alpha.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_initial_profile_joins_the_walls() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let m = cfg.validate().unwrap();
        let left = m.boundary.wall_value(&m.vs, Side::Left, &[]);
        let at0 = m.initial.eval(&[0.0]);
        for (a, b) in at0.0.iter().zip(&left.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
