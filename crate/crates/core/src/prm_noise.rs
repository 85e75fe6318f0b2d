//! Space-time grid realization of the stable martingale measure `L`.
//!
//! A cell `A` of volume `|A|` observed over one time step sees `L` evolve as a
//! one-sided stable process run at speed `|A|`, so its increment is a draw of
//! `W` at time `dt · |A|`. Two generators are offered:
//!
//! * [`NoiseMode::ExactCell`] draws that increment directly;
//! * [`NoiseMode::PrmThreshold`] builds it from the Poisson random measure,
//!   keeping every jump larger than `eps` in a ledger and replacing the
//!   compensated small jumps by one mean-zero residual draw.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::open01;
use crate::stable_core::{
    levy_tail_first_moment, levy_tail_mass, sample_stable_increment, small_jump_exponent_fraction, LevyNormalization,
    StableIndex,
};

/// Uniform grid on `[-R, R]^d` with `nx` cells per axis, advanced in steps of `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub d: usize,
    pub box_halfwidth: f64,
    pub nx: usize,
    pub dt: f64,
    pub n_steps: usize,
}

impl SpaceTimeGrid {
    pub fn new(d: usize, box_halfwidth: f64, nx: usize, dt: f64, n_steps: usize) -> Result<Self> {
        let g = Self { d, box_halfwidth, nx, dt, n_steps };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(domain(format!("dimension must be 1, 2 or 3, got {}", self.d)));
        }
        if self.nx < 2 {
            return Err(domain(format!("need at least 2 cells per axis, got {}", self.nx)));
        }
        if !(self.box_halfwidth > 0.0 && self.box_halfwidth.is_finite()) {
            return Err(domain(format!("box half-width must be positive, got {}", self.box_halfwidth)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(domain(format!("time step must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    /// Side length of one cell.
    #[inline]
    pub fn cell_width(&self) -> f64 {
        2.0 * self.box_halfwidth / self.nx as f64
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.cell_width().powi(self.d as i32)
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx.pow(self.d as u32)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Centre coordinate of the `i`-th cell along one axis.
    #[inline]
    pub fn axis_center(&self, i: usize) -> f64 {
        -self.box_halfwidth + (i as f64 + 0.5) * self.cell_width()
    }

    /// Per-axis indices of a flat cell index (row-major, first coordinate slowest).
    pub fn unflatten(&self, mut cell: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        for k in (0..self.d).rev() {
            out[k] = cell % self.nx;
            cell /= self.nx;
        }
        out
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().take(self.d).fold(0, |acc, &i| acc * self.nx + i)
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let idx = self.unflatten(cell);
        let mut x = [0.0; 3];
        for k in 0..self.d {
            x[k] = self.axis_center(idx[k]);
        }
        x
    }

    /// Axis index containing coordinate `x`, if inside the box.
    pub fn axis_index(&self, x: f64) -> Option<usize> {
        let u = (x + self.box_halfwidth) / self.cell_width();
        if u < 0.0 || u >= self.nx as f64 || !u.is_finite() {
            None
        } else {
            Some(u as usize)
        }
    }

    /// Cell containing `point`, if inside the box.
    pub fn cell_of(&self, point: &[f64]) -> Option<usize> {
        if point.len() < self.d {
            return None;
        }
        let mut idx = [0usize; 3];
        for k in 0..self.d {
            idx[k] = self.axis_index(point[k])?;
        }
        Some(self.flatten(&idx[..self.d]))
    }

    /// Warning text when `d ≥ 2/(α-1)`, outside the range where solutions are known to exist.
    pub fn dimension_warning(&self, alpha: StableIndex) -> Option<String> {
        let limit = 2.0 / (alpha.value() - 1.0);
        ((self.d as f64) >= limit).then(|| {
            format!("dimension {} is not below 2/(alpha-1) = {limit:.3}; solutions may not exist", self.d)
        })
    }
}

/// How slab increments are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NoiseMode {
    ExactCell,
    PrmThreshold {
        eps: f64,
        #[serde(default = "default_true")]
        compensate: bool,
    },
}

fn default_true() -> bool {
    true
}

/// One retained atom of the Poisson random measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub step: usize,
    pub cell: usize,
    pub r: f64,
}

/// Increments of `L` over one time step, cell by cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSlab {
    pub step: usize,
    pub increments: Vec<f64>,
    /// `None` for exact-cell slabs, which carry no jump bookkeeping.
    pub jumps: Option<Vec<JumpRecord>>,
}

impl NoiseSlab {
    pub fn zeros(step: usize, n_cells: usize, with_ledger: bool) -> Self {
        Self { step, increments: vec![0.0; n_cells], jumps: with_ledger.then(Vec::new) }
    }

    pub fn total(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// Merge two consecutive slabs into one covering both steps. Used to couple
    /// a run at step `2 dt` to a run at step `dt` on the same noise.
    pub fn merge_pair(first: &NoiseSlab, second: &NoiseSlab, coarse_step: usize) -> Result<NoiseSlab> {
        if first.increments.len() != second.increments.len() {
            return Err(Error::Shape("slabs cover different cell counts".into()));
        }
        let increments = first.increments.iter().zip(&second.increments).map(|(a, b)| a + b).collect();
        let jumps = match (&first.jumps, &second.jumps) {
            (Some(a), Some(b)) => Some(
                a.iter()
                    .chain(b.iter())
                    .map(|j| JumpRecord { step: coarse_step, ..*j })
                    .collect(),
            ),
            _ => None,
        };
        Ok(NoiseSlab { step: coarse_step, increments, jumps })
    }
}

/// Call `visit(r)` for every jump of size `r > eps` of a stable process run for `speed_time`.
/// Returns the number of jumps.
pub fn sample_large_jumps<R: Rng + ?Sized, F: FnMut(f64)>(
    alpha: StableIndex,
    speed_time: f64,
    eps: f64,
    rng: &mut R,
    mut visit: F,
) -> u64 {
    let mean = speed_time * levy_tail_mass(alpha, eps);
    if !(mean > 0.0) || !mean.is_finite() {
        return 0;
    }
    let count = Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0);
    let inv_alpha = -1.0 / alpha.value();
    for _ in 0..count {
        // Pareto tail of ν above eps
        visit(eps * open01(rng).powf(inv_alpha));
    }
    count
}

/// Slab generator bound to a grid, index and noise mode.
#[derive(Debug, Clone)]
pub struct NoiseGenerator {
    grid: SpaceTimeGrid,
    alpha: StableIndex,
    mode: NoiseMode,
    speed: f64,
    compensator: f64,
    residual_speed: f64,
}

impl NoiseGenerator {
    pub fn new(grid: &SpaceTimeGrid, alpha: StableIndex, mode: NoiseMode) -> Result<Self> {
        grid.validate()?;
        let speed = grid.dt * grid.cell_volume();
        let (compensator, residual_speed) = match mode {
            NoiseMode::ExactCell => (0.0, 0.0),
            NoiseMode::PrmThreshold { eps, compensate } => {
                if !(eps > 0.0) {
                    return Err(domain(format!("jump threshold must be positive, got {eps}")));
                }
                if compensate {
                    let share = residual_share(alpha, speed, eps);
                    (speed * levy_tail_first_moment(alpha, eps), speed * share)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        Ok(Self { grid: grid.clone(), alpha, mode, speed, compensator, residual_speed })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn alpha(&self) -> StableIndex {
        self.alpha
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Speed `dt · |cell|` of each cell's stable process over one step.
    pub fn cell_speed(&self) -> f64 {
        self.speed
    }

    /// Speed of the stable draw standing in for the compensated small jumps.
    pub fn residual_speed(&self) -> f64 {
        self.residual_speed
    }

    /// Expected number of ledger entries over the whole run.
    pub fn expected_jumps_per_run(&self) -> f64 {
        match self.mode {
            NoiseMode::ExactCell => 0.0,
            NoiseMode::PrmThreshold { eps, .. } => {
                expected_jump_count(&self.grid, self.alpha, eps) * self.grid.n_steps as f64
            }
        }
    }

    /// Warnings about the configuration, e.g. a threshold so high that no jump is expected.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let NoiseMode::PrmThreshold { eps, .. } = self.mode {
            if self.expected_jumps_per_run() < 1e-3 {
                out.push(format!("threshold eps={eps} leaves essentially no jumps in the ledger over the run"));
            }
            if self.residual_speed > 0.01 * self.speed {
                out.push(format!(
                    "small-jump residual carries {:.1}% of each cell's Laplace exponent",
                    100.0 * self.residual_speed / self.speed
                ));
            }
        }
        out.extend(self.grid.dimension_warning(self.alpha));
        out
    }

    pub fn generate<R: Rng + ?Sized>(&self, step: usize, rng: &mut R) -> NoiseSlab {
        let n = self.grid.n_cells();
        match self.mode {
            NoiseMode::ExactCell => {
                let increments = (0..n).map(|_| sample_stable_increment(self.alpha, self.speed, rng)).collect();
                NoiseSlab { step, increments, jumps: None }
            }
            NoiseMode::PrmThreshold { eps, .. } => {
                let mut increments = Vec::with_capacity(n);
                let mut jumps = Vec::new();
                for cell in 0..n {
                    let mut large = 0.0;
                    sample_large_jumps(self.alpha, self.speed, eps, rng, |r| {
                        large += r;
                        jumps.push(JumpRecord { step, cell, r });
                    });
                    let mut incr = large - self.compensator;
                    if self.residual_speed > 0.0 {
                        incr += sample_stable_increment(self.alpha, self.residual_speed, rng);
                    }
                    increments.push(incr);
                }
                NoiseSlab { step, increments, jumps: Some(jumps) }
            }
        }
    }
}

/// Free-function form of [`NoiseGenerator::generate`].
pub fn generate_noise_slab<R: Rng + ?Sized>(
    grid: &SpaceTimeGrid,
    alpha: StableIndex,
    mode: NoiseMode,
    step: usize,
    rng: &mut R,
) -> Result<NoiseSlab> {
    Ok(NoiseGenerator::new(grid, alpha, mode)?.generate(step, rng))
}

/// Expected number of jumps above `eps` in one slab: `n_cells · dt · |cell| · σ_α ε^{-α} / α`.
pub fn expected_jump_count(grid: &SpaceTimeGrid, alpha: StableIndex, eps: f64) -> f64 {
    grid.n_cells() as f64 * grid.dt * grid.cell_volume() * levy_tail_mass(alpha, eps)
}

/// Fraction of a cell's Laplace exponent carried by jumps below `eps`, evaluated at the
/// cell's own scale `λ = speed^{-1/α}`. This is the speed share handed to the residual draw.
pub fn residual_share(alpha: StableIndex, speed: f64, eps: f64) -> f64 {
    let lambda = speed.powf(-1.0 / alpha.value());
    small_jump_exponent_fraction(alpha, lambda * eps)
}

/// Largest threshold whose residual share stays below `max_share` for cells of the given speed.
pub fn threshold_for_residual_share(alpha: StableIndex, speed: f64, max_share: f64) -> f64 {
    let scale = speed.powf(1.0 / alpha.value());
    let (mut lo, mut hi) = (1e-12f64, 1e6f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if small_jump_exponent_fraction(alpha, mid) > max_share {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo * scale
}

/// Threshold below which jumps carry at most `max_missing` of the quadratic variation scale
/// `(θ t)^{2/α}` of `[W]_t`, in expectation.
pub fn small_jump_threshold_for_qv(alpha: StableIndex, norm: &LevyNormalization, t: f64, max_missing: f64) -> f64 {
    let a = alpha.value();
    let scale = (norm.theta * t).powf(2.0 / a);
    (max_missing * scale * (2.0 - a) / (t * norm.sigma_alpha)).powf(1.0 / (2.0 - a))
}
