//! Map chemical potentials to (density, momentum) and back.

use hydrolimit::model::VelocitySet;
use hydrolimit::thermo::{ChemicalPotential, Thermo, ThermoPoint};

fn main() -> hydrolimit::Result<()> {
    let vs = VelocitySet::default_for_dim(2)?;
    let thermo = Thermo::new(&vs);

    let lambda = ChemicalPotential(vec![0.3, -1.2, 0.8]);
    let tp = thermo.moments(&lambda);
    println!("lambda = {:?}", lambda.0);
    println!("thetas = {:?}", thermo.thetas(&lambda));
    println!("(rho, p) = {:?}", tp.0);

    let back = thermo.inverse_lambda(&tp)?;
    println!("recovered lambda = {:?}", back.0);
    println!("Jacobian:\n{}", thermo.jacobian(&back));

    let target = ThermoPoint::new(2.0, &[0.1, -0.05]);
    let lam = thermo.inverse_lambda(&target)?;
    println!("Lambda(2.0, (0.1, -0.05)) = {:?}", lam.0);
    Ok(())
}
