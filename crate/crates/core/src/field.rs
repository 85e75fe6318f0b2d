use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::prm_noise::SpaceTimeGrid;

/// Point mass of an initial measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Vec<f64>,
    pub mass: f64,
}

impl Atom {
    pub fn new(location: Vec<f64>, mass: f64) -> Self {
        Self { location, mass }
    }
}

/// Initial state `Y_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialMeasure {
    Atoms(Vec<Atom>),
    /// Density values on the run grid.
    Gridded(Vec<f64>),
}

impl InitialMeasure {
    pub fn point(location: Vec<f64>, mass: f64) -> Self {
        Self::Atoms(vec![Atom::new(location, mass)])
    }

    pub fn to_field(&self, grid: &SpaceTimeGrid) -> Result<DensityField> {
        match self {
            Self::Atoms(atoms) => DensityField::from_atoms(grid, atoms),
            Self::Gridded(values) => DensityField::from_values(grid.clone(), values.clone(), 0.0),
        }
    }

    /// `x_r`: right end of the support in the first coordinate.
    pub fn right_support_edge(&self, grid: &SpaceTimeGrid) -> f64 {
        match self {
            Self::Atoms(atoms) => right_support_edge(atoms),
            Self::Gridded(values) => values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.0)
                .map(|(c, _)| grid.cell_center(c)[0] + 0.5 * grid.cell_width())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// `x_r = inf{x : Y_0([x, ∞)) = 0}` computed from the atom list.
pub fn right_support_edge(atoms: &[Atom]) -> f64 {
    atoms
        .iter()
        .filter(|a| a.mass > 0.0)
        .map(|a| a.location[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Non-negative density on the grid (mass per unit volume) at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: SpaceTimeGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.n_cells()], time: 0.0 }
    }

    pub fn from_values(grid: SpaceTimeGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Shape(format!("grid has {} cells, got {} values", grid.n_cells(), values.len())));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(domain("density values must be finite and non-negative"));
        }
        Ok(Self { grid, values, time })
    }

    /// Deposit atoms by multilinear (cloud-in-cell) weights between neighbouring cell
    /// centres; preserves mass and first moments.
    pub fn from_atoms(grid: &SpaceTimeGrid, atoms: &[Atom]) -> Result<Self> {
        let mut field = Self::zeros(grid);
        let h = grid.cell_width();
        let vol = grid.cell_volume();
        for atom in atoms {
            if atom.location.len() != grid.d || !(atom.mass >= 0.0) {
                return Err(domain(format!("bad atom {atom:?} for a {}-dimensional grid", grid.d)));
            }
            let mut base = [0usize; 3];
            let mut frac = [0.0f64; 3];
            for k in 0..grid.d {
                let u = (atom.location[k] + grid.box_halfwidth) / h - 0.5;
                if u < 0.0 || u > (grid.nx - 1) as f64 {
                    return Err(domain(format!("atom at {:?} lies outside the grid interior", atom.location)));
                }
                let i = (u.floor() as usize).min(grid.nx - 2);
                base[k] = i;
                frac[k] = u - i as f64;
            }
            for corner in 0..(1usize << grid.d) {
                let mut idx = [0usize; 3];
                let mut w = 1.0;
                for k in 0..grid.d {
                    let up = (corner >> k) & 1 == 1;
                    idx[k] = base[k] + up as usize;
                    w *= if up { frac[k] } else { 1.0 - frac[k] };
                }
                if w > 0.0 {
                    field.values[grid.flatten(&idx[..grid.d])] += atom.mass * w / vol;
                }
            }
        }
        Ok(field)
    }

    /// `⟨Y, 1⟩`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `⟨Y, f⟩` with `f` evaluated at cell centres.
    pub fn pair_with<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let d = self.grid.d;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(c, v)| v * f(&self.grid.cell_center(c)[..d]))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Density of the cell containing `point`.
    pub fn value_at(&self, point: &[f64]) -> Option<f64> {
        self.grid.cell_of(point).map(|c| self.values[c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_deposit_preserves_mass_and_centre() {
        let g = SpaceTimeGrid::new(2, 1.0, 8, 0.1, 1).unwrap();
        let atoms = vec![Atom::new(vec![0.1, -0.33], 2.0), Atom::new(vec![-0.6, 0.2], 0.5)];
        let f = DensityField::from_atoms(&g, &atoms).unwrap();
        assert!((f.mass() - 2.5).abs() < 1e-12);
        let m1 = f.pair_with(|x| x[0]);
        let m2 = f.pair_with(|x| x[1]);
        assert!((m1 - (0.2 - 0.3)).abs() < 1e-12);
        assert!((m2 - (-0.66 + 0.1)).abs() < 1e-12);
        assert!(f.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn atom_on_cell_centre_lands_in_one_cell() {
        let g = SpaceTimeGrid::new(1, 1.0, 5, 0.1, 1).unwrap();
        let f = DensityField::from_atoms(&g, &[Atom::new(vec![0.0], 1.0)]).unwrap();
        assert_eq!(f.values.iter().filter(|v| **v > 0.0).count(), 1);
        assert!((f.values[2] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_outside_atoms_and_bad_values() {
        let g = SpaceTimeGrid::new(1, 1.0, 5, 0.1, 1).unwrap();
        assert!(DensityField::from_atoms(&g, &[Atom::new(vec![1.5], 1.0)]).is_err());
        assert!(DensityField::from_values(g.clone(), vec![1.0, -1.0, 0.0, 0.0, 0.0], 0.0).is_err());
        assert!(DensityField::from_values(g, vec![1.0; 4], 0.0).is_err());
    }

    #[test]
    fn support_edge_from_atoms() {
        let atoms = vec![Atom::new(vec![0.3], 1.0), Atom::new(vec![0.7], 0.0), Atom::new(vec![-2.0], 1.0)];
        assert_eq!(right_support_edge(&atoms), 0.3);
    }
}
