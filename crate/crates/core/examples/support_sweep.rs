//! Occupation-support radii across gamma on coupled noise, beside the zero-noise control.

use stable_spde::diagnostics::{support_study, SupportSettings};
use stable_spde::field::InitialMeasure;
use stable_spde::prm_noise::SpaceTimeGrid;
use stable_spde::rng::RngFactory;
use stable_spde::stable_core::StableIndex;

fn main() -> stable_spde::Result<()> {
    let settings = SupportSettings {
        alpha: StableIndex::new(1.5)?,
        gammas: vec![0.6, 0.75, 0.9, 1.0],
        grid: SpaceTimeGrid::new(1, 10.0, 512, 1e-4, 500)?,
        y0: InitialMeasure::point(vec![0.0], 1.0),
        centre: vec![0.0],
        n_replicates: 8,
        record_times: vec![0.01, 0.025, 0.05],
        mass_fractions: vec![0.9, 0.999],
        tau_supp: 1e-12,
        beyond_radius: 2.0,
    };
    let rep = support_study(&settings, &RngFactory::new(1))?;
    for c in std::iter::once(&rep.control).chain(&rep.curves) {
        println!(
            "{:>18}: threshold radius {:?}, r_0.999 {:?}, clip mass {:.1e}",
            c.label,
            c.threshold_radius.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            c.mass_radius[1].iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            c.mean_clip_mass
        );
    }
    println!("final spread monotone in gamma: {}", rep.monotone);
    Ok(())
}
