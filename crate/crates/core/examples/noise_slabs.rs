//! Space-time noise in both modes: exact cell increments and thresholded Poisson jumps
//! with a ledger.

use stable_spde::prm_noise::{
    expected_jump_count, residual_share, threshold_for_residual_share, NoiseGenerator, NoiseMode, NoiseSlab,
    SpaceTimeGrid,
};
use stable_spde::rng::{tag, RngFactory};
use stable_spde::stable_core::StableIndex;

fn main() -> stable_spde::Result<()> {
    let alpha = StableIndex::new(1.5)?;
    let grid = SpaceTimeGrid::new(1, 2.0, 64, 1e-3, 100)?;
    let speed = grid.dt * grid.cell_volume();
    let factory = RngFactory::new(3);

    let exact = NoiseGenerator::new(&grid, alpha, NoiseMode::ExactCell)?;
    let mut rng = factory.stream(tag::NOISE, 0);
    let slabs: Vec<NoiseSlab> = (0..grid.n_steps).map(|k| exact.generate(k, &mut rng)).collect();
    let total: f64 = slabs.iter().map(NoiseSlab::total).sum();
    println!("exact-cell: L([0,T] x box) = {total:.4} over {} cells", grid.n_cells());

    for share in [0.5, 0.2, 0.05] {
        let eps = threshold_for_residual_share(alpha, speed, share);
        let mode = NoiseMode::PrmThreshold { eps, compensate: true };
        let gen = NoiseGenerator::new(&grid, alpha, mode)?;
        let mut rng = factory.stream(tag::NOISE, 1);
        let jumps: usize = (0..grid.n_steps).map(|k| gen.generate(k, &mut rng).jumps.map_or(0, |j| j.len())).sum();
        println!(
            "threshold {eps:.3e}: residual share {:.3}, expected jumps {:.0}, drawn {jumps}",
            residual_share(alpha, speed, eps),
            expected_jump_count(&grid, alpha, eps) * grid.n_steps as f64
        );
    }

    // two fine slabs merge into one coarse slab with the same atoms
    let gen = NoiseGenerator::new(&grid, alpha, NoiseMode::PrmThreshold { eps: 1e-3, compensate: true })?;
    let a = gen.generate(0, &mut rng);
    let b = gen.generate(1, &mut rng);
    let merged = NoiseSlab::merge_pair(&a, &b, 0)?;
    println!("merged slab total {:.6} = {:.6} + {:.6}", merged.total(), a.total(), b.total());
    Ok(())
}
