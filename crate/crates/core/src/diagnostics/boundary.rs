//! Residual of `⟨(·−x₀)₊, Y_t⟩ = A_t(x₀) + ∫ (y−x₀)₊ Y_{s−}(y)^γ L(ds,dy)` on the grid.
//!
//! With `x₀` on a cell centre, `g = (·−x₀)₊` sampled at centres has discrete
//! Laplacian `δ_{x₀}/h`, so the identity holds for the lattice heat flow in
//! continuous time. What remains is the left-point quadrature of `A_t`, clipping
//! and boundary leak; all of these shrink with `dt`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DensityField, InitialMeasure};
use crate::prm_noise::{NoiseMode, NoiseSlab, SpaceTimeGrid};
use crate::rng::{tag, RngFactory};
use crate::spde::{ModelSpec, RunOptions, Solver, StepObserver};
use crate::stable_core::StableIndex;
use crate::stats::MeanEstimate;
use crate::walsh::{integrate, GridIntegrand};

use super::accumulate_local_time;

/// Move `x0` to a cell centre at or right of it such that the gridded `Y_0`
/// vanishes strictly right of the point. Requires `x0 > x_r`.
pub fn snap_boundary_point(y0: &InitialMeasure, grid: &SpaceTimeGrid, x0: f64) -> Result<f64> {
    if grid.d != 1 {
        return Err(Error::Domain("the boundary identity is one-dimensional".into()));
    }
    let x_r = y0.right_support_edge(grid);
    if !(x0 > x_r) {
        return Err(Error::Domain(format!("x0 = {x0} must lie right of the support edge x_r = {x_r}")));
    }
    let field = y0.to_field(grid)?;
    let h = grid.cell_width();
    let first = ((x0 + grid.box_halfwidth) / h - 0.5).ceil().max(0.0) as usize;
    let last_mass = field.values.iter().rposition(|v| *v > 0.0).unwrap_or(0);
    let cell = first.max(last_mass);
    if cell + 1 >= grid.nx {
        return Err(Error::Domain(format!("x0 = {x0} leaves no room inside the box")));
    }
    Ok(grid.axis_center(cell))
}

/// Records the three terms of the identity during a run.
#[derive(Debug, Clone)]
pub struct BoundaryRecorder {
    grid: SpaceTimeGrid,
    gamma: f64,
    x0: f64,
    cell0: usize,
    weight: Vec<f64>,
    pairing: Vec<f64>,
    at_x0: Vec<f64>,
    phi: Vec<f64>,
    slabs: Vec<NoiseSlab>,
}

impl BoundaryRecorder {
    /// `x0` must already be a cell centre, e.g. from [`snap_boundary_point`].
    pub fn new(grid: &SpaceTimeGrid, gamma: f64, x0: f64, y0: &DensityField) -> Result<Self> {
        if grid.d != 1 {
            return Err(Error::Domain("the boundary identity is one-dimensional".into()));
        }
        let cell0 = grid.cell_of(&[x0]).ok_or_else(|| Error::Domain(format!("x0 = {x0} outside the box")))?;
        let x0 = grid.axis_center(cell0);
        let weight: Vec<f64> = (0..grid.nx).map(|c| (grid.axis_center(c) - x0).max(0.0)).collect();
        let mut rec = Self {
            grid: grid.clone(),
            gamma,
            x0,
            cell0,
            weight,
            pairing: Vec::with_capacity(grid.n_steps + 1),
            at_x0: Vec::with_capacity(grid.n_steps + 1),
            phi: Vec::with_capacity(grid.n_steps * grid.nx),
            slabs: Vec::with_capacity(grid.n_steps),
        };
        rec.record_state(y0);
        Ok(rec)
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    fn record_state(&mut self, f: &DensityField) {
        let h = self.grid.cell_width();
        self.pairing.push(self.weight.iter().zip(&f.values).map(|(g, v)| g * v).sum::<f64>() * h);
        self.at_x0.push(f.values[self.cell0]);
    }

    /// Residual path; needs jump-ledger noise.
    pub fn residual(&self, alpha: StableIndex) -> Result<ResidualPath> {
        if self.slabs.iter().any(|s| s.jumps.is_none()) {
            return Err(Error::LedgerRequired("boundary identity residual needs prm-threshold noise".into()));
        }
        let n_steps = self.slabs.len();
        let mut grid = self.grid.clone();
        grid.n_steps = n_steps;
        let phi = GridIntegrand::from_values(n_steps, grid.n_cells(), self.phi.clone(), true)?;
        let martingale = integrate(&phi, &self.slabs, alpha, &grid)?.values;
        let local_time = accumulate_local_time(vec![self.x0], &self.at_x0, grid.dt).values;
        let residual = (0..=n_steps).map(|k| self.pairing[k] - local_time[k] - martingale[k]).collect();
        Ok(ResidualPath {
            x0: self.x0,
            times: (0..=n_steps).map(|k| k as f64 * grid.dt).collect(),
            pairing: self.pairing.clone(),
            local_time,
            martingale,
            residual,
        })
    }
}

impl StepObserver for BoundaryRecorder {
    fn observe(&mut self, _step: usize, before: &DensityField, slab: &NoiseSlab, after: &DensityField) -> Result<()> {
        let gamma = self.gamma;
        self.phi.extend(
            self.weight
                .iter()
                .zip(&before.values)
                .map(|(g, v)| if *v > 0.0 { g * v.powf(gamma) } else { 0.0 }),
        );
        self.slabs.push(slab.clone());
        self.record_state(after);
        Ok(())
    }
}

/// The three terms of the identity and their mismatch, per step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPath {
    pub x0: f64,
    pub times: Vec<f64>,
    pub pairing: Vec<f64>,
    pub local_time: Vec<f64>,
    pub martingale: Vec<f64>,
    pub residual: Vec<f64>,
}

impl ResidualPath {
    pub fn terminal_abs(&self) -> f64 {
        self.residual.last().map_or(0.0, |r| r.abs())
    }

    pub fn mean_abs(&self) -> f64 {
        self.residual.iter().map(|r| r.abs()).sum::<f64>() / self.residual.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub x0: f64,
    pub eps: f64,
    pub n_replicates: usize,
    /// `|residual(T)|` over replicates at `dt`.
    pub fine: MeanEstimate,
    /// Same at `2 dt` on pairwise-merged noise.
    pub coarse: MeanEstimate,
    pub ratio: f64,
    pub fine_path_mean: f64,
    pub coarse_path_mean: f64,
    /// Mean `|residual|` at each step boundary, fine and coarse.
    pub fine_abs_path: Vec<f64>,
    pub coarse_abs_path: Vec<f64>,
    pub failed_replicates: usize,
}

/// Runs each replicate at `dt` and at `2 dt` on the same Poisson atoms and compares
/// the terminal residuals.
pub fn boundary_refinement_experiment(
    spec: ModelSpec,
    fine_grid: &SpaceTimeGrid,
    y0: &InitialMeasure,
    x0: f64,
    eps: f64,
    n_replicates: usize,
    factory: &RngFactory,
) -> Result<RefinementReport> {
    if !fine_grid.n_steps.is_multiple_of(2) {
        return Err(Error::Domain("refinement needs an even number of fine steps".into()));
    }
    let mode = NoiseMode::PrmThreshold { eps, compensate: true };
    let fine = Solver::new(spec, fine_grid, mode)?;
    let mut coarse_grid = fine_grid.clone();
    coarse_grid.dt *= 2.0;
    coarse_grid.n_steps /= 2;
    let coarse = Solver::new(spec, &coarse_grid, mode)?;
    let x0 = snap_boundary_point(y0, fine_grid, x0)?;
    let f0 = y0.to_field(fine_grid)?;
    let opts = RunOptions::default();

    let results: Vec<Result<(ResidualPath, ResidualPath)>> = (0..n_replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = factory.stream(tag::BOUNDARY, i);
            let slabs: Vec<NoiseSlab> = (0..fine_grid.n_steps).map(|k| fine.noise().generate(k, &mut rng)).collect();
            let mut rec_f = BoundaryRecorder::new(fine_grid, spec.gamma, x0, &f0)?;
            fine.run_driven(y0, &opts, |k| Ok(slabs[k].clone()), &mut rec_f)?;
            let mut rec_c = BoundaryRecorder::new(&coarse_grid, spec.gamma, x0, &f0)?;
            coarse.run_driven(y0, &opts, |k| NoiseSlab::merge_pair(&slabs[2 * k], &slabs[2 * k + 1], k), &mut rec_c)?;
            Ok((rec_f.residual(spec.alpha)?, rec_c.residual(spec.alpha)?))
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = 0;
    for r in results {
        match r {
            Ok(pair) => ok.push(pair),
            Err(Error::NonFinite { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let fine_abs: Vec<f64> = ok.iter().map(|(f, _)| f.terminal_abs()).collect();
    let coarse_abs: Vec<f64> = ok.iter().map(|(_, c)| c.terminal_abs()).collect();
    let fine_est = MeanEstimate::from_samples(&fine_abs);
    let coarse_est = MeanEstimate::from_samples(&coarse_abs);
    let n = ok.len().max(1) as f64;
    let mean_path = |pick: &dyn Fn(&(ResidualPath, ResidualPath)) -> &ResidualPath, len: usize| -> Vec<f64> {
        (0..len).map(|k| ok.iter().map(|p| pick(p).residual[k].abs()).sum::<f64>() / n).collect()
    };
    let fine_abs_path = mean_path(&|p| &p.0, fine_grid.n_steps + 1);
    let coarse_abs_path = mean_path(&|p| &p.1, coarse_grid.n_steps + 1);
    Ok(RefinementReport {
        x0,
        eps,
        n_replicates,
        fine: fine_est,
        coarse: coarse_est,
        ratio: coarse_est.mean / fine_est.mean,
        fine_path_mean: ok.iter().map(|(f, _)| f.mean_abs()).sum::<f64>() / n,
        coarse_path_mean: ok.iter().map(|(_, c)| c.mean_abs()).sum::<f64>() / n,
        fine_abs_path,
        coarse_abs_path,
        failed_replicates: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Atom;
    use crate::heat::padding_cells;

    fn alpha() -> StableIndex {
        StableIndex::new(1.5).unwrap()
    }

    #[test]
    fn snapping_respects_support() {
        let g = SpaceTimeGrid::new(1, 1.0, 10, 0.01, 2).unwrap();
        let y0 = InitialMeasure::point(vec![0.05], 1.0);
        // the atom is split between the centres -0.1 and 0.1
        let x0 = snap_boundary_point(&y0, &g, 0.06).unwrap();
        let f = y0.to_field(&g).unwrap();
        for c in 0..10 {
            if g.axis_center(c) > x0 + 1e-12 {
                assert_eq!(f.values[c], 0.0);
            }
        }
        assert!(snap_boundary_point(&y0, &g, 0.0).is_err());
    }

    #[test]
    fn zero_state_gives_zero_residual() {
        let g = SpaceTimeGrid::new(1, 2.0, 16, 0.01, 5).unwrap();
        let spec = ModelSpec::new(alpha(), 0.75, 1).unwrap();
        let solver = Solver::new(spec, &g, NoiseMode::PrmThreshold { eps: 0.1, compensate: true }).unwrap();
        let y0 = InitialMeasure::Atoms(vec![]);
        let f0 = y0.to_field(&g).unwrap();
        let mut rec = BoundaryRecorder::new(&g, 0.75, 0.5, &f0).unwrap();
        solver.run_driven(&y0, &RunOptions::default(), |k| Ok(NoiseSlab::zeros(k, 16, true)), &mut rec).unwrap();
        assert!(rec.residual(alpha()).unwrap().residual.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn exact_cell_noise_is_refused() {
        let g = SpaceTimeGrid::new(1, 2.0, 16, 0.01, 2).unwrap();
        let spec = ModelSpec::new(alpha(), 0.75, 1).unwrap();
        let solver = Solver::new(spec, &g, NoiseMode::ExactCell).unwrap();
        let y0 = InitialMeasure::point(vec![-0.5], 1.0);
        let f0 = y0.to_field(&g).unwrap();
        let mut rec = BoundaryRecorder::new(&g, 0.75, 0.375, &f0).unwrap();
        let mut rng = RngFactory::new(1).stream(0, 0);
        solver.run_driven(&y0, &RunOptions::default(), |k| Ok(solver.noise().generate(k, &mut rng)), &mut rec).unwrap();
        assert!(matches!(rec.residual(alpha()), Err(Error::LedgerRequired(_))));
    }

    /// Lattice heat flow by a Taylor series of the matrix exponential on a long line.
    fn lattice_heat(values: &[f64], t: f64, h: f64, pad: usize) -> Vec<f64> {
        let n = values.len() + 2 * pad;
        let mut u = vec![0.0; n];
        u[pad..pad + values.len()].copy_from_slice(values);
        let mut term = u.clone();
        let mut out = u.clone();
        for k in 1..60 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                let left = if i > 0 { term[i - 1] } else { 0.0 };
                let right = if i + 1 < n { term[i + 1] } else { 0.0 };
                next[i] = (left - 2.0 * term[i] + right) / (h * h) * t / k as f64;
            }
            out.iter_mut().zip(&next).for_each(|(o, x)| *o += x);
            term = next;
        }
        out[pad..pad + values.len()].to_vec()
    }

    #[test]
    fn planted_jump_leaves_only_splitting_error() {
        // four cells of width 0.5; mass in cells 0 and 1, x0 at the centre of cell 2
        let g = SpaceTimeGrid::new(1, 1.0, 4, 0.02, 2).unwrap();
        let h = g.cell_width();
        let gamma = 0.75;
        let spec = ModelSpec::new(alpha(), gamma, 1).unwrap();
        let y0 = InitialMeasure::Atoms(vec![Atom::new(vec![-0.75], 1.0), Atom::new(vec![-0.25], 0.5)]);
        let f0 = y0.to_field(&g).unwrap();
        let x0 = g.axis_center(2);
        let r = 3.7;
        let slabs = [NoiseSlab::zeros(0, 4, true), {
            let mut s = NoiseSlab::zeros(1, 4, true);
            s.increments[3] = r;
            s.jumps = Some(vec![crate::prm_noise::JumpRecord { step: 1, cell: 3, r }]);
            s
        }];
        let mut rec = BoundaryRecorder::new(&g, gamma, x0, &f0).unwrap();
        // the box is far too small for the solver's leak guard, so step by hand
        let stepper = crate::heat::HeatStepper::new(&g, g.dt).unwrap();
        let mut field = f0.clone();
        for (k, slab) in slabs.iter().enumerate() {
            let (next, _) = crate::spde::step_with(&field, slab, &spec, &stepper).unwrap();
            rec.observe(k, &field, slab, &next).unwrap();
            field = next;
        }
        let path = rec.residual(alpha()).unwrap();

        // oracle: recompute both steps with the matrix exponential
        let pad = padding_cells(g.dt, h) + 40;
        let weight = [0.0, 0.0, 0.0, h];
        let pair = |f: &[f64]| f.iter().zip(&weight).map(|(a, b)| a * b).sum::<f64>() * h;
        let s0 = f0.values.clone();
        let s1 = lattice_heat(&s0, g.dt, h, pad);
        let mut s2 = lattice_heat(&s1, g.dt, h, pad);
        s2[3] += s1[3].powf(gamma) * r / h;
        let splitting: f64 = [&s0, &s1]
            .iter()
            .map(|s| pair(&lattice_heat(s, g.dt, h, pad)) - pair(s) - g.dt * s[2])
            .sum();
        assert!(path.martingale[2] > 0.0);
        assert!((path.martingale[2] - h * s1[3].powf(gamma) * r).abs() < 1e-12);
        assert!((path.pairing[2] - pair(&s2)).abs() < 1e-12);
        assert!((path.residual[2] - splitting).abs() < 1e-12, "{} vs {splitting}", path.residual[2]);
    }

    #[test]
    fn refinement_is_deterministic_and_rejects_odd_steps() {
        let g = SpaceTimeGrid::new(1, 4.0, 64, 2e-3, 20).unwrap();
        let spec = ModelSpec::new(alpha(), 0.75, 1).unwrap();
        let y0 = InitialMeasure::point(vec![0.0], 1.0);
        let f = RngFactory::new(3);
        let a = boundary_refinement_experiment(spec, &g, &y0, 0.5, 0.01, 4, &f).unwrap();
        let b = boundary_refinement_experiment(spec, &g, &y0, 0.5, 0.01, 4, &f).unwrap();
        assert_eq!(a, b);
        assert!(a.fine.mean.is_finite());
        let mut odd = g.clone();
        odd.n_steps = 21;
        assert!(boundary_refinement_experiment(spec, &odd, &y0, 0.5, 0.01, 4, &f).is_err());
    }
}
