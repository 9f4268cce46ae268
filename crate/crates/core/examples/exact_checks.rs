//! Exact generator of a three-site system: stationary law, detailed balance
//! of each part and relative entropy along the evolution.

use hydrolimit::dynamics::{build_jump_law, BoundaryData, GeneratorParts};
use hydrolimit::exactcheck::{
    check_detailed_balance, entropy_production, stationary_distribution, total_variation, ExactSystem,
};
use hydrolimit::model::VelocitySet;

fn main() -> hydrolimit::Result<()> {
    let vs = VelocitySet::default_for_dim(1)?;
    let law = build_jump_law(&vs)?;
    let theta = [0.3, 0.6];
    let matching = BoundaryData::constant(1, &theta, &theta)?;
    let sys = ExactSystem::new(3, &vs, &law, &matching)?;
    let nu = sys.uniform_product(&theta);
    println!("{} states", sys.n_states());

    for parts in ["ex1,c,b", "b", "all"] {
        let q = sys.generator(GeneratorParts::parse(parts)?);
        let pi = stationary_distribution(&q)?;
        println!(
            "{parts:8} TV(pi, product) = {:.2e}  detailed balance w.r.t. pi = {:.2e}",
            total_variation(&pi, &nu),
            check_detailed_balance(&q, &pi)
        );
    }

    let open = BoundaryData::constant(1, &[0.8, 0.7], &[0.1, 0.2])?;
    let sys = ExactSystem::new(3, &vs, &law, &open)?;
    let q = sys.generator(GeneratorParts::ALL);
    let pi = stationary_distribution(&q)?;
    let mut mu0 = vec![0.0; sys.n_states()];
    mu0[0] = 1.0;
    let times = [0.0, 0.1, 0.5, 1.0, 2.0];
    for (t, h) in times.iter().zip(entropy_production(&mu0, &q, &pi, &times)) {
        println!("H(mu_t | pi) at t = {t:.1}: {h:.6}");
    }
    Ok(())
}
