//! Two-sided exit of the spectrally positive stable process against the bound b^delta.

use stable_spde::diagnostics::{gamblers_ruin_experiment, RuinSettings};
use stable_spde::rng::RngFactory;
use stable_spde::stable_core::StableIndex;

fn main() -> stable_spde::Result<()> {
    let alpha = StableIndex::new(1.5)?;
    let factory = RngFactory::new(7);
    for (b, delta) in [(0.01, 0.5), (0.04, 0.5), (0.01, 0.25)] {
        let est = gamblers_ruin_experiment(alpha, b, delta, 20_000, &factory, &RuinSettings::default())?;
        println!(
            "b = {b}, delta = {delta}: P(up first) = {:.4} [{:.4}, {:.4}], exact {:.4}, bound {:.4}, censored {}",
            est.estimate, est.wilson_low, est.wilson_high, est.exact, est.bound, est.neither
        );
    }
    Ok(())
}
