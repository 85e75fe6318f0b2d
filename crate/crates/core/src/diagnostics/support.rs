//! Spatial extent of the occupation measure `∫_0^t Y_s ds` across a sweep over `γ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::field::{DensityField, InitialMeasure};
use crate::prm_noise::{NoiseMode, NoiseSlab, SpaceTimeGrid};
use crate::rng::{tag, RngFactory};
use crate::spde::{ModelSpec, RunOptions, Solver, StepObserver};
use crate::stable_core::StableIndex;

/// Smallest `r` such that cells with centre within `r` of `centre` carry at least
/// `fraction` of the total. Zero for an empty field.
pub fn mass_fraction_radius(values: &[f64], grid: &SpaceTimeGrid, centre: &[f64], fraction: f64) -> f64 {
    let mut cells: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(c, v)| (distance(grid, c, centre), *v))
        .collect();
    let total: f64 = cells.iter().map(|c| c.1).sum();
    if total <= 0.0 {
        return 0.0;
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = fraction.clamp(0.0, 1.0) * total;
    let mut acc = 0.0;
    for (r, v) in &cells {
        acc += v;
        if acc >= target * (1.0 - 1e-12) {
            return *r;
        }
    }
    cells.last().map_or(0.0, |c| c.0)
}

/// Largest distance from `centre` of a cell whose value exceeds `tau`.
pub fn threshold_radius(values: &[f64], grid: &SpaceTimeGrid, centre: &[f64], tau: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > tau)
        .map(|(c, _)| distance(grid, c, centre))
        .fold(0.0, f64::max)
}

fn distance(grid: &SpaceTimeGrid, cell: usize, centre: &[f64]) -> f64 {
    let x = grid.cell_center(cell);
    (0..grid.d).map(|k| (x[k] - centre[k]).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSettings {
    pub alpha: StableIndex,
    pub gammas: Vec<f64>,
    pub grid: SpaceTimeGrid,
    pub y0: InitialMeasure,
    /// Centre from which radii are measured.
    pub centre: Vec<f64>,
    pub n_replicates: usize,
    pub record_times: Vec<f64>,
    /// Mass fractions `1 − η` for the mass-fraction radii.
    pub mass_fractions: Vec<f64>,
    /// Occupation density above which a cell counts as occupied.
    pub tau_supp: f64,
    /// Radius used for the "no occupation mass beyond R" fraction.
    pub beyond_radius: f64,
}

/// Radii of one `γ` (or the zero-noise control), averaged over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCurve {
    pub label: String,
    pub gamma: f64,
    pub times: Vec<f64>,
    /// `[fraction][time]`.
    pub mass_radius: Vec<Vec<f64>>,
    pub threshold_radius: Vec<f64>,
    /// Fraction of replicates with zero occupation mass beyond `beyond_radius`, per time.
    pub zero_beyond_fraction: Vec<f64>,
    /// Occupation threshold radius of each replicate at the last time.
    pub final_threshold_radii: Vec<f64>,
    /// Mean mass added by clipping negative cells at zero.
    pub mean_clip_mass: f64,
    pub failed_replicates: usize,
}

impl SupportCurve {
    /// Spread metric compared across `γ`: mean occupation threshold radius at the last time.
    pub fn final_spread(&self) -> f64 {
        *self.threshold_radius.last().unwrap_or(&f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub settings: SupportSettings,
    pub control: SupportCurve,
    pub curves: Vec<SupportCurve>,
    /// Whether the final spread is monotone (either direction) along the `γ` sweep.
    pub monotone: bool,
}

/// `(mass radii, threshold radius, zero beyond)` at one recorded time.
type RecordRow = (Vec<f64>, f64, bool);

struct OccupationObserver<'a> {
    grid: &'a SpaceTimeGrid,
    settings: &'a SupportSettings,
    record_steps: Vec<usize>,
    occupation: Vec<f64>,
    rows: Vec<RecordRow>,
}

impl StepObserver for OccupationObserver<'_> {
    fn observe(&mut self, step: usize, before: &DensityField, _: &NoiseSlab, _: &DensityField) -> Result<()> {
        let dt = self.grid.dt;
        self.occupation.iter_mut().zip(&before.values).for_each(|(o, v)| *o += v * dt);
        if self.record_steps.contains(&(step + 1)) {
            let s = self.settings;
            let radii = s
                .mass_fractions
                .iter()
                .map(|&f| mass_fraction_radius(&self.occupation, self.grid, &s.centre, f))
                .collect();
            let thr = threshold_radius(&self.occupation, self.grid, &s.centre, s.tau_supp);
            let zero_beyond = self
                .occupation
                .iter()
                .enumerate()
                .all(|(c, v)| *v == 0.0 || distance(self.grid, c, &s.centre) <= s.beyond_radius);
            self.rows.push((radii, thr, zero_beyond));
        }
        Ok(())
    }
}

fn sweep_one(settings: &SupportSettings, gamma: f64, control: bool, factory: &RngFactory) -> Result<SupportCurve> {
    let grid = &settings.grid;
    let spec = ModelSpec::new(settings.alpha, gamma, grid.d)?;
    let solver = Solver::new(spec, grid, NoiseMode::ExactCell)?;
    let record_steps: Vec<usize> = settings.record_times.iter().map(|t| (t / grid.dt).round() as usize).collect();
    if record_steps.iter().any(|&k| k == 0 || k > grid.n_steps) {
        return Err(domain("support record times must lie in (0, horizon]"));
    }
    let n = if control { 1 } else { settings.n_replicates };
    let runs: Vec<Result<(Vec<RecordRow>, f64)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            // all γ share replicate streams, so the sweep is coupled
            let mut rng = factory.stream(tag::SUPPORT, i);
            let mut obs = OccupationObserver {
                grid,
                settings,
                record_steps: record_steps.clone(),
                occupation: vec![0.0; grid.n_cells()],
                rows: Vec::new(),
            };
            let opts = RunOptions::default();
            let traj = if control {
                solver.run_driven(&settings.y0, &opts, |k| Ok(NoiseSlab::zeros(k, grid.n_cells(), false)), &mut obs)?
            } else {
                solver.run_driven(&settings.y0, &opts, |k| Ok(solver.noise().generate(k, &mut rng)), &mut obs)?
            };
            Ok((obs.rows, traj.total_clip_loss()))
        })
        .collect();
    let mut ok = Vec::new();
    let mut clip = 0.0;
    let mut failed = 0;
    for r in runs {
        match r {
            Ok((rows, c)) => {
                ok.push(rows);
                clip += c;
            }
            Err(crate::Error::NonFinite { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let m = ok.len().max(1) as f64;
    let nt = record_steps.len();
    let mass_radius = (0..settings.mass_fractions.len())
        .map(|fi| (0..nt).map(|ti| ok.iter().map(|rows| rows[ti].0[fi]).sum::<f64>() / m).collect())
        .collect();
    Ok(SupportCurve {
        label: if control { "zero-noise control".into() } else { format!("gamma={gamma}") },
        gamma,
        times: record_steps.iter().map(|&k| k as f64 * grid.dt).collect(),
        mass_radius,
        threshold_radius: (0..nt).map(|ti| ok.iter().map(|rows| rows[ti].1).sum::<f64>() / m).collect(),
        zero_beyond_fraction: (0..nt).map(|ti| ok.iter().filter(|rows| rows[ti].2).count() as f64 / m).collect(),
        final_threshold_radii: ok.iter().map(|rows| rows[nt - 1].1).collect(),
        mean_clip_mass: clip / m,
        failed_replicates: failed,
    })
}

/// Runs the zero-noise control and every `γ` of the sweep on coupled noise.
pub fn support_study(settings: &SupportSettings, factory: &RngFactory) -> Result<SupportReport> {
    if settings.gammas.is_empty() || settings.record_times.is_empty() {
        return Err(domain("support study needs at least one gamma and one record time"));
    }
    let control = sweep_one(settings, *settings.gammas.last().unwrap_or(&1.0), true, factory)?;
    let curves = settings
        .gammas
        .iter()
        .map(|&g| sweep_one(settings, g, false, factory))
        .collect::<Result<Vec<_>>>()?;
    let spreads: Vec<f64> = curves.iter().map(|c| c.final_spread()).collect();
    let up = spreads.windows(2).all(|w| w[1] >= w[0]);
    let down = spreads.windows(2).all(|w| w[1] <= w[0]);
    Ok(SupportReport { settings: settings.clone(), control, curves, monotone: up || down })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> SpaceTimeGrid {
        SpaceTimeGrid::new(1, 2.0, 8, 0.01, 4).unwrap()
    }

    #[test]
    fn radii_on_a_hand_field() {
        let g = line();
        // centres -1.75 .. 1.75 step 0.5
        let v = [0.0, 0.0, 0.0, 3.0, 1.0, 0.0, 0.0, 0.5];
        assert_eq!(mass_fraction_radius(&v, &g, &[0.0], 0.5), 0.25);
        assert_eq!(mass_fraction_radius(&v, &g, &[0.0], 0.85), 0.25);
        assert_eq!(mass_fraction_radius(&v, &g, &[0.0], 0.9), 1.75);
        assert_eq!(threshold_radius(&v, &g, &[0.0], 0.7), 0.25);
        assert_eq!(threshold_radius(&v, &g, &[0.0], 0.1), 1.75);
        assert_eq!(mass_fraction_radius(&[0.0; 8], &g, &[0.0], 0.9), 0.0);
    }

    #[test]
    fn radii_non_decreasing_in_fraction() {
        let g = SpaceTimeGrid::new(1, 5.0, 100, 0.01, 1).unwrap();
        let v: Vec<f64> = (0..100).map(|c| (-(g.axis_center(c) - 0.3).powi(2)).exp()).collect();
        let fr = [0.5, 0.9, 0.99, 0.999, 1.0];
        let r: Vec<f64> = fr.iter().map(|&f| mass_fraction_radius(&v, &g, &[0.0], f)).collect();
        assert!(r.windows(2).all(|w| w[1] >= w[0]), "{r:?}");
    }

    #[test]
    fn small_sweep_runs_and_control_spreads() {
        let g = SpaceTimeGrid::new(1, 4.0, 64, 1e-3, 40).unwrap();
        let settings = SupportSettings {
            alpha: StableIndex::new(1.5).unwrap(),
            gammas: vec![0.75, 1.0],
            grid: g,
            y0: InitialMeasure::point(vec![0.0], 1.0),
            centre: vec![0.0],
            n_replicates: 4,
            record_times: vec![0.01, 0.02, 0.04],
            mass_fractions: vec![0.9, 0.999],
            tau_supp: 1e-6,
            beyond_radius: 2.0,
        };
        let rep = support_study(&settings, &RngFactory::new(6)).unwrap();
        assert_eq!(rep.curves.len(), 2);
        let c = &rep.control.threshold_radius;
        assert!(c.windows(2).all(|w| w[1] >= w[0]), "{c:?}");
        for curve in &rep.curves {
            assert_eq!(curve.final_threshold_radii.len(), 4);
            assert!(curve.mass_radius[0].iter().zip(&curve.mass_radius[1]).all(|(a, b)| a <= b));
        }
        let again = support_study(&settings, &RngFactory::new(6)).unwrap();
        assert_eq!(rep, again);
    }
}
