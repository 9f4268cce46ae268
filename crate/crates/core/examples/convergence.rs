//! A small hydrodynamic convergence run: empirical pairings against the PDE.

use hydrolimit::harness::{self, ExperimentConfig};

const CONFIG: &str = r#"
kind = "converge"
id = "converge-example"

[model]
dim = 1
alpha = ["0.65", "0.55"]
beta = ["0.25", "0.35"]
initial = ["1.2 - 0.6*x", "0.05 - 0.1*x"]

[numerics]
n = [16, 32, 64]
replicas = 40
t_end = 0.05
pde_m = 128

[seeds]
root = 3
"#;

fn main() -> hydrolimit::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let record = harness::run(&cfg, None)?;
    for line in record.summary_lines() {
        println!("{line}");
    }
    let dir = std::env::temp_dir().join("hydrolimit-converge-example");
    for f in record.write(&dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
