//! Draws of the stable process W and the subordinator S, checked against their
//! Laplace transforms.

use stable_spde::rng::{tag, RngFactory};
use stable_spde::stable_core::{
    laplace_exponent_stable, sample_stable_increment, sample_subordinator_increment, LevyNormalization, StableIndex,
};
use stable_spde::stats::MeanEstimate;

fn main() -> stable_spde::Result<()> {
    let factory = RngFactory::new(7);
    for a in [1.2, 1.5, 1.8] {
        let alpha = StableIndex::new(a)?;
        let norm = LevyNormalization::new(alpha);
        let mut rng = factory.stream(tag::STABLE, 0);
        let w: Vec<f64> = (0..200_000).map(|_| sample_stable_increment(alpha, 1.0, &mut rng)).collect();
        let est = MeanEstimate::of(&w, |x| (-x).exp());
        let target = laplace_exponent_stable(alpha, 1.0, 1.0)?.exp();
        println!("alpha {a}: sigma = {:.7}, theta = {:.7}", norm.sigma_alpha, norm.theta);
        println!("  E exp(-W_1) = {:.4} +/- {:.4}   exact {:.4}", est.mean, est.se, target);

        let mut rng = factory.stream(tag::SUBORDINATOR, 0);
        let s: Vec<f64> = (0..200_000).map(|_| sample_subordinator_increment(alpha, &norm, 1.0, &mut rng)).collect();
        let est = MeanEstimate::of(&s, |x| (-x).exp());
        println!("  E exp(-S_1) = {:.4} +/- {:.4}   exact {:.4}", est.mean, est.se, (-norm.theta).exp());
    }
    Ok(())
}
