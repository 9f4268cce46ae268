//! Product measures with slowly varying parameters and canonical measures on
//! small blocks.

mod ensembles;
mod profile;

pub use ensembles::{
    canonical_expectation, enumerate_block_states, ensembles_gap, Block, BlockIndex, BlockState,
    EnsembleGap, ENUMERATION_LIMIT_BITS,
};
pub use profile::{ProfileKind, SpatialProfile};

use rand::Rng;

use crate::dynamics::{Configuration, Lattice};
use crate::error::{Error, Result};
use crate::thermo::{ChemicalPotential, Thermo};

/// `theta_v(Lambda(profile(x/N)))` for every site, site-major.
pub fn site_thetas(thermo: &Thermo, profile: &SpatialProfile, lattice: &Lattice) -> Result<Vec<Vec<f64>>> {
    if profile.dim() != lattice.dim() || thermo.dim() != lattice.dim() {
        return Err(Error::InvalidProfile(format!(
            "profile dimension {} does not match lattice dimension {}",
            profile.dim(),
            lattice.dim()
        )));
    }
    let mut lambda = ChemicalPotential::zero(thermo.dim());
    let mut out = Vec::with_capacity(lattice.n_sites());
    for site in 0..lattice.n_sites() {
        let tp = profile.eval(&lattice.macro_point(site));
        // neighbouring sites have nearby parameters; warm start from the last one
        lambda = thermo
            .inverse_lambda_from(&tp, &lambda)
            .or_else(|_| thermo.inverse_lambda(&tp))?;
        out.push(thermo.thetas(&lambda));
    }
    Ok(out)
}

/// Independent Bernoulli occupancies with the given per-site densities.
pub fn sample_from_thetas<R: Rng + ?Sized>(
    lattice: Lattice,
    thetas: &[Vec<f64>],
    rng: &mut R,
) -> Configuration {
    let n_vel = thetas.first().map_or(1, |t| t.len());
    let words = thetas
        .iter()
        .map(|th| {
            th.iter()
                .enumerate()
                .fold(0u64, |w, (v, &p)| if rng.random::<f64>() < p { w | 1 << v } else { w })
        })
        .collect();
    Configuration::from_words(lattice, n_vel, words).expect("words built from |V| densities")
}

/// Draw from the product measure `nu^N` whose marginal at `x` is
/// `theta_v(Lambda(profile(x/N)))`.
pub fn sample_product<R: Rng + ?Sized>(
    thermo: &Thermo,
    profile: &SpatialProfile,
    lattice: Lattice,
    rng: &mut R,
) -> Result<Configuration> {
    let thetas = site_thetas(thermo, profile, &lattice)?;
    Ok(sample_from_thetas(lattice, &thetas, rng))
}

/// Draw the initial configuration associated with the profile `(rho_0, p_0)`.
/// Same law as [`sample_product`].
pub fn sample_associated<R: Rng + ?Sized>(
    thermo: &Thermo,
    initial: &SpatialProfile,
    lattice: Lattice,
    rng: &mut R,
) -> Result<Configuration> {
    sample_product(thermo, initial, lattice, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VelocitySet;
    use crate::thermo::ThermoPoint;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn midpoint_bits_are_fair_coins() {
        let vs = VelocitySet::default_for_dim(2).unwrap();
        let th = Thermo::new(&vs);
        let prof = SpatialProfile::constant(2, th.barycenter()).unwrap();
        let lat = Lattice::new(40, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_product(&th, &prof, lat, &mut rng).unwrap();
        let bits = (lat.n_sites() * vs.len()) as f64;
        let mass: f64 = c.counts().iter().sum::<u64>() as f64;
        let sd = (bits * 0.25).sqrt();
        assert!((mass - bits / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn near_saturation_is_near_full() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let prof = SpatialProfile::constant(1, ThermoPoint::new(2.0 - 2e-6, &[0.0])).unwrap();
        let lat = Lattice::new(100, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = sample_product(&th, &prof, lat, &mut rng).unwrap();
        assert!(c.counts().iter().all(|&k| k >= 98));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let prof = SpatialProfile::expression(1, &["1 + 0.5*sin(pi*x)", "0.2*x"]).unwrap();
        let lat = Lattice::new(64, 1).unwrap();
        let a = sample_associated(&th, &prof, lat, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_associated(&th, &prof, lat, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_site_bit_means_converge_to_theta() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let prof = SpatialProfile::linear_x1(
            1,
            ThermoPoint::new(1.6, &[0.3]),
            ThermoPoint::new(0.4, &[-0.1]),
        )
        .unwrap();
        let lat = Lattice::new(8, 1).unwrap();
        let thetas = site_thetas(&th, &prof, &lat).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 4000;
        let mut hits = vec![[0usize; 2]; lat.n_sites()];
        for _ in 0..reps {
            let c = sample_from_thetas(lat, &thetas, &mut rng);
            for (s, h) in hits.iter_mut().enumerate() {
                for (v, x) in h.iter_mut().enumerate() {
                    *x += c.get(s, v) as usize;
                }
            }
        }
        for (s, h) in hits.iter().enumerate() {
            for v in 0..2 {
                let p = thetas[s][v];
                let sd = (p * (1.0 - p) / reps as f64).sqrt();
                let m = h[v] as f64 / reps as f64;
                assert!((m - p).abs() < 4.0 * sd, "site {s} v {v}: {m} vs {p}");
            }
        }
        // site densities reproduce the profile
        for (s, t) in thetas.iter().enumerate() {
            let target = prof.eval(&lat.macro_point(s));
            assert!((t[0] + t[1] - target.rho()).abs() < 1e-10);
        }
    }

    #[test]
    fn flux_coefficient_matches_sampled_current() {
        // E[eta(x,v)(1 - eta(x+e_1,v))] = chi(theta_v) under a product measure.
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let tp = ThermoPoint::new(1.2, &[0.15]);
        let prof = SpatialProfile::constant(1, tp.clone()).unwrap();
        let lat = Lattice::new(200, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut samples = Vec::new();
        for _ in 0..200 {
            let c = sample_product(&th, &prof, lat, &mut rng).unwrap();
            let mut acc = 0.0;
            for s in 0..lat.n_sites() - 1 {
                acc += (c.get(s, 0) && !c.get(s + 1, 0)) as u8 as f64;
            }
            samples.push(acc / (lat.n_sites() - 1) as f64);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = th.flux_coefficient(&tp, 0).unwrap();
        assert!((mean - expect).abs() < 3.0 * (var / n).sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn out_of_domain_profile_is_rejected() {
        let vs = VelocitySet::default_for_dim(1).unwrap();
        let th = Thermo::new(&vs);
        let prof = SpatialProfile::constant(1, ThermoPoint::new(2.5, &[0.0])).unwrap();
        let lat = Lattice::new(10, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            sample_product(&th, &prof, lat, &mut rng),
            Err(Error::NotInDomain { .. })
        ));
    }
}
