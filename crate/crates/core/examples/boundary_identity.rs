//! Residual of the boundary pairing identity on one trajectory, then under refinement.

use stable_spde::diagnostics::{boundary_refinement_experiment, snap_boundary_point, BoundaryRecorder};
use stable_spde::field::InitialMeasure;
use stable_spde::prm_noise::{threshold_for_residual_share, NoiseMode, SpaceTimeGrid};
use stable_spde::rng::{tag, RngFactory};
use stable_spde::spde::{ModelSpec, RunOptions, Solver};
use stable_spde::stable_core::StableIndex;

fn main() -> stable_spde::Result<()> {
    let alpha = StableIndex::new(1.5)?;
    let spec = ModelSpec::new(alpha, 0.75, 1)?;
    let grid = SpaceTimeGrid::new(1, 10.0, 512, 1e-4, 400)?;
    let y0 = InitialMeasure::point(vec![0.0], 1.0);
    let eps = threshold_for_residual_share(alpha, grid.dt * grid.cell_width(), 0.2);
    let solver = Solver::new(spec, &grid, NoiseMode::PrmThreshold { eps, compensate: true })?;
    let x0 = snap_boundary_point(&y0, &grid, 0.5)?;

    let mut rec = BoundaryRecorder::new(&grid, spec.gamma, x0, &y0.to_field(&grid)?)?;
    let mut rng = RngFactory::new(2).stream(tag::BOUNDARY, 0);
    solver.run_driven(&y0, &RunOptions::default(), |k| Ok(solver.noise().generate(k, &mut rng)), &mut rec)?;
    let path = rec.residual(alpha)?;
    println!("x0 = {x0}");
    for k in (0..=grid.n_steps).step_by(100) {
        println!(
            "t = {:.3}: pairing {:.5e} = local time {:.5e} + martingale {:+.5e} + residual {:+.2e}",
            path.times[k], path.pairing[k], path.local_time[k], path.martingale[k], path.residual[k]
        );
    }

    let rep = boundary_refinement_experiment(spec, &grid, &y0, 0.5, eps, 10, &RngFactory::new(2))?;
    println!(
        "mean |residual(T)|: {:.3e} at dt, {:.3e} at 2dt, ratio {:.2}",
        rep.fine.mean, rep.coarse.mean, rep.ratio
    );
    Ok(())
}
