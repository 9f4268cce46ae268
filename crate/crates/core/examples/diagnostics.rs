//! Boundary replacement diagnostic at equilibrium for several block sizes.

use hydrolimit::harness::{self, ExperimentConfig};

const CONFIG: &str = r#"
kind = "diagnostics"
id = "diagnostics-example"

[model]
dim = 1
alpha = ["0.45", "0.35"]
beta = ["0.45", "0.35"]

[numerics]
n = [64]
replicas = 10
t_end = 0.05
ell = [2, 4, 8]

[seeds]
root = 5
"#;

fn main() -> hydrolimit::Result<()> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let record = harness::run(&cfg, None)?;
    for line in record.summary_lines() {
        println!("{line}");
    }
    Ok(())
}
