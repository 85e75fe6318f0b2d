//! Grid solver for `∂_t Y = ΔY + Y_{t-}^γ L̇` in mild form.
//!
//! Each step is a Lie splitting: heat flow over `dt`, then an explicit kick
//! `Y^γ · ΔL / |cell|` with the coefficient taken from the pre-step field.
//! Negative cells are clipped to zero and the added mass is booked as `clip_loss`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::field::{DensityField, InitialMeasure};
use crate::heat::{mass_outside_box, HeatStepper};
use crate::prm_noise::{NoiseGenerator, NoiseMode, NoiseSlab, SpaceTimeGrid};
use crate::rng::{tag, RngFactory};
use crate::stable_core::StableIndex;

/// Largest fraction of `P_T Y_0` mass allowed outside the box at the horizon.
pub const MAX_BOX_LEAK: f64 = 1e-4;

/// Model parameters `(α, γ, d)`; `p = αγ` and the regime flags are always derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub alpha: StableIndex,
    pub gamma: f64,
    pub d: usize,
}

impl ModelSpec {
    pub fn new(alpha: StableIndex, gamma: f64, d: usize) -> Result<Self> {
        let spec = Self { alpha, gamma, d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(domain(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(1..=3).contains(&self.d) {
            return Err(domain(format!("dimension must be 1, 2 or 3, got {}", self.d)));
        }
        Ok(())
    }

    pub fn p(&self) -> f64 {
        self.alpha.value() * self.gamma
    }

    /// `p < 1 + 2/d` and `d < 2/(α−1)`.
    pub fn existence_ok(&self) -> bool {
        let d = self.d as f64;
        self.p() < 1.0 + 2.0 / d && d < 2.0 / (self.alpha.value() - 1.0)
    }

    /// Range of `γ` in which the support is known to stay compact.
    pub fn compact_support_regime(&self) -> bool {
        let a = self.alpha.value();
        if self.d == 1 {
            self.gamma > 2.0 - a && self.gamma < 1.0
        } else {
            self.gamma >= 1.0 / a && self.gamma < 1.0
        }
    }

    /// Dimensions `d ≥ 1` with `d < 2/(α−1)`, capped at 3.
    pub fn admissible_dimensions(alpha: StableIndex) -> Vec<usize> {
        let limit = 2.0 / (alpha.value() - 1.0);
        (1..=3).filter(|&d| (d as f64) < limit).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.existence_ok() {
            out.push(format!(
                "outside the known existence regime (p < 1 + 2/d, d < 2/(alpha-1)): p = {:.4}, d = {}, alpha = {}",
                self.p(),
                self.d,
                self.alpha.value()
            ));
        }
        out
    }
}

/// Per-step accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub clip_loss: f64,
    pub leak: f64,
}

/// One splitting step with a prebuilt heat stepper for `dt`.
pub fn step_with(
    field: &DensityField,
    slab: &NoiseSlab,
    spec: &ModelSpec,
    heat: &HeatStepper,
) -> Result<(DensityField, StepStats)> {
    let grid = &field.grid;
    if slab.increments.len() != field.values.len() {
        return Err(Error::Shape(format!(
            "slab has {} cells, field has {}",
            slab.increments.len(),
            field.values.len()
        )));
    }
    let vol = grid.cell_volume();
    let mut next = field.values.clone();
    let leak = heat.apply(&mut next);
    let mut clipped = 0.0;
    for (cell, (v, (&pre, &dl))) in next.iter_mut().zip(field.values.iter().zip(&slab.increments)).enumerate() {
        if pre > 0.0 && dl != 0.0 {
            *v += pre.powf(spec.gamma) * dl / vol;
        }
        if !v.is_finite() {
            return Err(Error::NonFinite { step: slab.step, cell });
        }
        if *v < 0.0 {
            clipped -= *v;
            *v = 0.0;
        }
    }
    let out = DensityField { grid: grid.clone(), values: next, time: field.time + grid.dt };
    Ok((out, StepStats { clip_loss: clipped * vol, leak }))
}

/// One splitting step.
pub fn step(field: &DensityField, slab: &NoiseSlab, spec: &ModelSpec) -> Result<DensityField> {
    let heat = HeatStepper::new(&field.grid, field.grid.dt)?;
    Ok(step_with(field, slab, spec, &heat)?.0)
}

/// Hook called after every step of a run.
pub trait StepObserver {
    fn observe(&mut self, step: usize, before: &DensityField, slab: &NoiseSlab, after: &DensityField) -> Result<()>;
}

impl StepObserver for () {
    fn observe(&mut self, _: usize, _: &DensityField, _: &NoiseSlab, _: &DensityField) -> Result<()> {
        Ok(())
    }
}

/// What a run records besides the mass path.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Times at which full fields are kept (rounded to the nearest step).
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Points whose cell density is recorded at every step.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    /// Levels `z` of the first coordinate whose projected density is recorded at every step.
    #[serde(default)]
    pub projected_levels: Vec<f64>,
    /// Keep `∫_0^t Ȳ_s ds` per cell.
    #[serde(default)]
    pub occupation: bool,
}

/// Density recorded at one location for every step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub location: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrajectory {
    pub spec: ModelSpec,
    pub grid: SpaceTimeGrid,
    pub snapshots: Vec<DensityField>,
    /// `V_t = ⟨Y_t, 1⟩` at every step boundary.
    pub mass_path: Vec<f64>,
    /// Cumulative mass added by clipping, per step boundary.
    pub clip_loss: Vec<f64>,
    /// Cumulative mass pushed out of the box, per step boundary.
    pub leak: Vec<f64>,
    /// `∫∫ Ȳ_{s-}^p ds dx`.
    pub p_integral: f64,
    pub probes: Vec<ProbeSeries>,
    pub projected: Vec<ProbeSeries>,
    pub occupation: Option<Vec<f64>>,
    pub final_field: DensityField,
    pub warnings: Vec<String>,
}

impl SolutionTrajectory {
    pub fn total_clip_loss(&self) -> f64 {
        *self.clip_loss.last().unwrap_or(&0.0)
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&DensityField> {
        let dt = self.grid.dt;
        self.snapshots.iter().find(|f| (f.time - t).abs() < 0.5 * dt)
    }
}

/// `𝕐̄(z)`: density integrated over the hyperplane slab at first coordinate `z`.
pub fn projected_density(field: &DensityField, z: f64) -> Option<f64> {
    let grid = &field.grid;
    let i = grid.axis_index(z)?;
    let per_line = grid.nx.pow(grid.d as u32 - 1);
    let start = i * per_line;
    let transverse = grid.cell_width().powi(grid.d as i32 - 1);
    Some(field.values[start..start + per_line].iter().sum::<f64>() * transverse)
}

/// Solver bound to a model, grid and noise mode.
#[derive(Debug, Clone)]
pub struct Solver {
    spec: ModelSpec,
    grid: SpaceTimeGrid,
    noise: NoiseGenerator,
    heat: HeatStepper,
}

impl Solver {
    pub fn new(spec: ModelSpec, grid: &SpaceTimeGrid, mode: NoiseMode) -> Result<Self> {
        spec.validate()?;
        if spec.d != grid.d {
            return Err(Error::Shape(format!("model has d={}, grid has d={}", spec.d, grid.d)));
        }
        Ok(Self {
            spec,
            grid: grid.clone(),
            noise: NoiseGenerator::new(grid, spec.alpha, mode)?,
            heat: HeatStepper::new(grid, grid.dt)?,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn noise(&self) -> &NoiseGenerator {
        &self.noise
    }

    /// Rejects boxes that lose more than [`MAX_BOX_LEAK`] of `P_T Y_0` mass by the horizon.
    pub fn check_box(&self, y0: &InitialMeasure) -> Result<()> {
        let t = self.grid.horizon();
        let (outside, total) = match y0 {
            InitialMeasure::Atoms(atoms) => {
                (mass_outside_box(atoms, t, self.grid.box_halfwidth), atoms.iter().map(|a| a.mass).sum::<f64>())
            }
            InitialMeasure::Gridded(_) => {
                let f = y0.to_field(&self.grid)?;
                let mut v = f.values.clone();
                (HeatStepper::new(&self.grid, t)?.apply(&mut v), f.mass())
            }
        };
        if total > 0.0 && outside > MAX_BOX_LEAK * total {
            return Err(Error::Config(format!(
                "box half-width {} loses {:.2e} of the heat-flow mass by t={t}; limit is {MAX_BOX_LEAK:.0e}",
                self.grid.box_halfwidth,
                outside / total
            )));
        }
        Ok(())
    }

    /// Run on fresh noise drawn from `rng`.
    pub fn run<R: rand::Rng + ?Sized>(
        &self,
        y0: &InitialMeasure,
        options: &RunOptions,
        rng: &mut R,
    ) -> Result<SolutionTrajectory> {
        self.run_driven(y0, options, |s| Ok(self.noise.generate(s, rng)), &mut ())
    }

    /// Run with slabs supplied by `next_slab(step)` and an observer.
    pub fn run_driven<F, O>(
        &self,
        y0: &InitialMeasure,
        options: &RunOptions,
        mut next_slab: F,
        observer: &mut O,
    ) -> Result<SolutionTrajectory>
    where
        F: FnMut(usize) -> Result<NoiseSlab>,
        O: StepObserver + ?Sized,
    {
        self.check_box(y0)?;
        let grid = &self.grid;
        let n = grid.n_steps;
        let vol = grid.cell_volume();
        let p = self.spec.p();

        let snapshot_steps: Vec<usize> = options
            .snapshot_times
            .iter()
            .map(|&t| {
                if !(t >= 0.0) || t > grid.horizon() + 0.5 * grid.dt {
                    Err(domain(format!("snapshot time {t} outside [0, {}]", grid.horizon())))
                } else {
                    Ok((t / grid.dt).round() as usize)
                }
            })
            .collect::<Result<_>>()?;
        let probe_cells: Vec<usize> = options
            .probes
            .iter()
            .map(|x| grid.cell_of(x).ok_or_else(|| domain(format!("probe {x:?} outside the box"))))
            .collect::<Result<_>>()?;
        if !options.projected_levels.is_empty() && grid.d < 2 {
            return Err(domain("projected local time needs d >= 2"));
        }

        let mut field = y0.to_field(grid)?;
        let mut warnings = self.spec.warnings();
        warnings.extend(self.noise.warnings());

        let mut snapshots = Vec::new();
        let mut mass_path = Vec::with_capacity(n + 1);
        let mut clip_loss = Vec::with_capacity(n + 1);
        let mut leak = Vec::with_capacity(n + 1);
        let mut probes: Vec<ProbeSeries> =
            options.probes.iter().map(|x| ProbeSeries { location: x.clone(), values: Vec::with_capacity(n + 1) }).collect();
        let mut projected: Vec<ProbeSeries> = options
            .projected_levels
            .iter()
            .map(|&z| ProbeSeries { location: vec![z], values: Vec::with_capacity(n + 1) })
            .collect();
        let mut occupation = options.occupation.then(|| vec![0.0; grid.n_cells()]);
        let mut p_integral = 0.0;
        let (mut clip_acc, mut leak_acc) = (0.0, 0.0);

        let mut record = |k: usize,
                          f: &DensityField,
                          clip_acc: f64,
                          leak_acc: f64,
                          snapshots: &mut Vec<DensityField>,
                          probes: &mut Vec<ProbeSeries>,
                          projected: &mut Vec<ProbeSeries>| {
            mass_path.push(f.mass());
            clip_loss.push(clip_acc);
            leak.push(leak_acc);
            for (series, &c) in probes.iter_mut().zip(&probe_cells) {
                series.values.push(f.values[c]);
            }
            for series in projected.iter_mut() {
                series.values.push(projected_density(f, series.location[0]).unwrap_or(0.0));
            }
            if snapshot_steps.contains(&k) {
                snapshots.push(f.clone());
            }
        };
        record(0, &field, 0.0, 0.0, &mut snapshots, &mut probes, &mut projected);

        for k in 0..n {
            let slab = next_slab(k)?;
            if let Some(occ) = occupation.as_mut() {
                occ.iter_mut().zip(&field.values).for_each(|(o, v)| *o += v * grid.dt);
            }
            p_integral += field.values.iter().filter(|v| **v > 0.0).map(|v| v.powf(p)).sum::<f64>() * vol * grid.dt;
            let (next, stats) = step_with(&field, &slab, &self.spec, &self.heat)?;
            observer.observe(k, &field, &slab, &next)?;
            clip_acc += stats.clip_loss;
            leak_acc += stats.leak;
            field = next;
            record(k + 1, &field, clip_acc, leak_acc, &mut snapshots, &mut probes, &mut projected);
        }

        let y0_mass = mass_path[0];
        if y0_mass > 0.0 && leak_acc > MAX_BOX_LEAK * y0_mass {
            warnings.push(format!("boundary leak {:.2e} exceeds {MAX_BOX_LEAK:.0e} of the initial mass", leak_acc / y0_mass));
        }
        Ok(SolutionTrajectory {
            spec: self.spec,
            grid: grid.clone(),
            snapshots,
            mass_path,
            clip_loss,
            leak,
            p_integral,
            probes,
            projected,
            occupation,
            final_field: field,
            warnings,
        })
    }
}

/// Outcome of one ensemble member: its trajectory, or the error that aborted it.
pub type ReplicateResult = std::result::Result<SolutionTrajectory, String>;

/// Independent replicates `0..n`; replicate `i` uses stream `(NOISE, i)` whatever the thread count.
pub fn run_ensemble(
    solver: &Solver,
    y0: &InitialMeasure,
    options: &RunOptions,
    n_replicates: usize,
    factory: &RngFactory,
) -> Vec<ReplicateResult> {
    (0..n_replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = factory.stream(tag::NOISE, i);
            solver.run(y0, options, &mut rng).map_err(|e| e.to_string())
        })
        .collect()
}
