//! One trajectory of the equation from a point mass, with probes, mass accounting and a
//! binary snapshot.

use stable_spde::diagnostics::local_time;
use stable_spde::field::InitialMeasure;
use stable_spde::prm_noise::{NoiseMode, SpaceTimeGrid};
use stable_spde::rng::{tag, RngFactory};
use stable_spde::snapshot::{read_snapshot, write_snapshot, Snapshot};
use stable_spde::spde::{ModelSpec, RunOptions, Solver};
use stable_spde::stable_core::StableIndex;

fn main() -> stable_spde::Result<()> {
    let alpha = StableIndex::new(1.5)?;
    let spec = ModelSpec::new(alpha, 0.75, 1)?;
    let grid = SpaceTimeGrid::new(1, 10.0, 512, 1e-4, 1000)?;
    let solver = Solver::new(spec, &grid, NoiseMode::ExactCell)?;
    let y0 = InitialMeasure::point(vec![0.0], 1.0);
    let opts = RunOptions {
        snapshot_times: vec![0.01, 0.05, 0.1],
        probes: vec![vec![0.0], vec![0.5]],
        ..Default::default()
    };
    let traj = solver.run(&y0, &opts, &mut RngFactory::new(5).stream(tag::NOISE, 0))?;
    for w in &traj.warnings {
        println!("warning: {w}");
    }
    for f in &traj.snapshots {
        let k = (f.time / grid.dt).round() as usize;
        println!(
            "t = {:.2}: mass {:.4}, clip {:.1e}, leak {:.1e}, Y(0) = {:.4}",
            f.time, traj.mass_path[k], traj.clip_loss[k], traj.leak[k], f.value_at(&[0.0]).unwrap_or(0.0)
        );
    }
    let a = local_time(&traj, &[0.5])?;
    println!("local time at 0.5 by T: {:.5}", a.values.last().unwrap());
    println!("p-integral: {:.4}", traj.p_integral);

    let snap = Snapshot { alpha: 1.5, field: traj.final_field.clone(), ledger: Vec::new() };
    let mut bytes = Vec::new();
    write_snapshot(&mut bytes, &snap)?;
    assert_eq!(read_snapshot(&bytes[..])?, snap);
    println!("snapshot: {} bytes, round trip ok", bytes.len());
    Ok(())
}
