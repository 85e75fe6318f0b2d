//! Heat semigroup for `∂_t u = Δu` (generator Δ, not Δ/2).
//!
//! Gridded fields are propagated with the lattice heat kernel, the semigroup of
//! the nearest-neighbour discrete Laplacian. It is applied spectrally along each
//! axis on a zero-padded line, then cut back to the box; whatever lands in the
//! padding is reported as boundary leak. Output below the transform's round-off
//! floor is set to zero: with a sublinear noise coefficient, round-off crumbs would
//! otherwise be amplified into spurious mass far from the support.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Result};
use crate::field::{Atom, DensityField};
use crate::prm_noise::SpaceTimeGrid;

/// `p_t(x) = (4πt)^{-d/2} exp(-|x|²/4t)`.
pub fn heat_kernel(t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((4.0 * std::f64::consts::PI * t).powf(-0.5 * d) * (-r2 / (4.0 * t)).exp())
}

/// `P_t Y_0(x)` for an atomic `Y_0`, by direct kernel evaluation.
pub fn heat_of_atoms(atoms: &[Atom], t: f64, x: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for a in atoms {
        let diff: Vec<f64> = x.iter().zip(&a.location).map(|(p, q)| p - q).collect();
        acc += a.mass * heat_kernel(t, &diff)?;
    }
    Ok(acc)
}

/// Mass of `P_t Y_0` outside `[-R, R]^d` for atomic `Y_0`.
pub fn mass_outside_box(atoms: &[Atom], t: f64, box_halfwidth: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    atoms
        .iter()
        .map(|a| {
            let inside: f64 = a
                .location
                .iter()
                .map(|&x| {
                    let hi = 0.5 * erfc(-(box_halfwidth - x) / (s * std::f64::consts::SQRT_2));
                    let lo = 0.5 * erfc(-(-box_halfwidth - x) / (s * std::f64::consts::SQRT_2));
                    hi - lo
                })
                .product();
            a.mass * (1.0 - inside)
        })
        .sum()
}

/// Relative size, against the field maximum, below which transform output is treated as zero.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Padding (cells per side) that keeps lattice-kernel mass beyond it negligible.
/// On coarse grids the lattice walk has Poisson rather than Gaussian tails, so
/// both bounds are taken.
pub fn padding_cells(t: f64, h: f64) -> usize {
    let gaussian = (7.0 * (2.0 * t).sqrt() / h).ceil();
    let poisson = (std::f64::consts::E.powi(2) * 2.0 * t / (h * h)).ceil();
    gaussian.max(poisson).max(25.0) as usize + 2
}

/// Precomputed transforms and multiplier for one propagation time on one grid.
#[derive(Clone)]
pub struct HeatStepper {
    d: usize,
    nx: usize,
    pad: usize,
    len: usize,
    cell_volume: f64,
    multiplier: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for HeatStepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HeatStepper").field("d", &self.d).field("nx", &self.nx).field("pad", &self.pad).finish()
    }
}

/// Result of propagating a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOutcome {
    pub field: DensityField,
    pub leaked_mass: f64,
}

impl HeatStepper {
    pub fn new(grid: &SpaceTimeGrid, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(domain(format!("semigroup time must be positive, got {t}")));
        }
        let h = grid.cell_width();
        let pad = padding_cells(t, h);
        let len = grid.nx + 2 * pad;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scale = 4.0 * t / (h * h);
        let multiplier = (0..len)
            .map(|j| {
                let s = (std::f64::consts::PI * j as f64 / len as f64).sin();
                (-scale * s * s).exp() / len as f64
            })
            .collect();
        Ok(Self { d: grid.d, nx: grid.nx, pad, len, cell_volume: grid.cell_volume(), multiplier, forward, inverse })
    }

    /// Propagate `values` in place; returns the mass pushed out of the box.
    pub fn apply(&self, values: &mut [f64]) -> f64 {
        let before: f64 = values.iter().sum();
        let floor = ROUNDOFF_FLOOR * values.iter().fold(0.0f64, |m, v| m.max(*v));
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        let mut scratch =
            vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len())];
        let n = self.nx;
        for axis in 0..self.d {
            // stride of this axis in the row-major layout
            let stride = n.pow((self.d - 1 - axis) as u32);
            let lines = values.len() / n;
            for line in 0..lines {
                let outer = line / stride;
                let inner = line % stride;
                let start = outer * stride * n + inner;
                if (0..n).all(|i| values[start + i * stride] == 0.0) {
                    continue;
                }
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for i in 0..n {
                    buf[self.pad + i].re = values[start + i * stride];
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                for (c, m) in buf.iter_mut().zip(&self.multiplier) {
                    *c *= *m;
                }
                self.inverse.process_with_scratch(&mut buf, &mut scratch);
                for i in 0..n {
                    let v = buf[self.pad + i].re;
                    values[start + i * stride] = if v > floor { v } else { 0.0 };
                }
            }
        }
        let after: f64 = values.iter().sum();
        ((before - after) * self.cell_volume).max(0.0)
    }
}

/// `P_t` applied to a gridded field.
pub fn apply_semigroup(field: &DensityField, t: f64) -> Result<SemigroupOutcome> {
    let stepper = HeatStepper::new(&field.grid, t)?;
    let mut out = field.clone();
    let leaked_mass = stepper.apply(&mut out.values);
    out.time += t;
    Ok(SemigroupOutcome { field: out, leaked_mass })
}
