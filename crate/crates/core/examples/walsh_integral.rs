//! A deterministic Walsh integral is the stable process run at the inner clock.

use stable_spde::experiment::verify::profile_case;
use stable_spde::experiment::Profile;
use stable_spde::rng::{tag, RngFactory};
use stable_spde::stable_core::StableIndex;
use stable_spde::stats::{ks_two_sample, quantile};
use stable_spde::walsh::{inner_clock, sample_terminal_values, sample_time_changed};

fn main() -> stable_spde::Result<()> {
    let alpha = StableIndex::new(1.5)?;
    let factory = RngFactory::new(11);
    for profile in [Profile::Box, Profile::Triangle] {
        let (grid, phi) = profile_case(profile);
        let clock = *inner_clock(&phi, alpha, &grid).last().unwrap();
        let integral = sample_terminal_values(&phi, &grid, alpha, 20_000, &factory)?;
        let direct = sample_time_changed(alpha, clock, 20_000, &mut factory.stream(tag::STABLE, 0));
        let ks = ks_two_sample(&integral, &direct);
        println!("{profile:?}: T = {clock:.4}, KS D = {:.4}, p = {:.3}", ks.statistic, ks.p_value);
        for q in [0.1, 0.5, 0.9] {
            println!("  q{q}: integral {:+.4}  W_T {:+.4}", quantile(&integral, q), quantile(&direct, q));
        }
    }
    Ok(())
}
