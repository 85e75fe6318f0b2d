//! Lattice heat semigroup on a point mass, against the Gaussian kernel.

use stable_spde::field::{Atom, InitialMeasure};
use stable_spde::heat::{apply_semigroup, heat_kernel, mass_outside_box};
use stable_spde::prm_noise::SpaceTimeGrid;

fn main() -> stable_spde::Result<()> {
    let grid = SpaceTimeGrid::new(1, 6.0, 384, 1e-3, 1)?;
    let y0 = InitialMeasure::point(vec![0.0], 1.0).to_field(&grid)?;
    for t in [0.1, 1.0, 4.0] {
        let out = apply_semigroup(&y0, t)?;
        let mut worst: f64 = 0.0;
        for c in 0..grid.n_cells() {
            let x = grid.axis_center(c);
            worst = worst.max((out.field.values[c] - heat_kernel(t, &[x])?).abs());
        }
        let predicted = mass_outside_box(&[Atom::new(vec![0.0], 1.0)], t, grid.box_halfwidth);
        println!(
            "t = {t}: mass {:.8}, leaked {:.2e} (Gaussian tail {:.2e}), max |P_t - p_t| {worst:.2e}",
            out.field.mass(),
            out.leaked_mass,
            predicted
        );
    }
    Ok(())
}
