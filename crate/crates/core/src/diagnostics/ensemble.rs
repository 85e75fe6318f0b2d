//! Checks computed over an ensemble of solver runs.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::field::InitialMeasure;
use crate::heat::apply_semigroup;
use crate::spde::SolutionTrajectory;
use crate::stable_core::StableIndex;
use crate::stats::{hill_estimator, linear_fit, MeanEstimate};

use super::CheckRecord;

fn grid_of(trajs: &[SolutionTrajectory]) -> Result<&crate::prm_noise::SpaceTimeGrid> {
    trajs.first().map(|t| &t.grid).ok_or_else(|| domain("empty ensemble"))
}

fn snapshot_values(trajs: &[SolutionTrajectory], t: f64) -> Result<Vec<&[f64]>> {
    trajs
        .iter()
        .map(|tr| {
            tr.snapshot_at(t)
                .map(|f| f.values.as_slice())
                .ok_or_else(|| crate::Error::NotRecorded(format!("no snapshot at t={t}")))
        })
        .collect()
}

/// Cellwise `mean Ȳ_t ≤ P_t Y_0 + 3 SE`, with `P_t` the lattice semigroup applied to the
/// gridded `Y_0`; passes when at most `allowance` of the cells violate at every time.
pub fn mean_measure_check(
    trajs: &[SolutionTrajectory],
    y0: &InitialMeasure,
    times: &[f64],
    allowance: f64,
) -> Result<CheckRecord> {
    let grid = grid_of(trajs)?;
    let f0 = y0.to_field(grid)?;
    let mut rec = CheckRecord::new("mean measure dominated by heat flow", true, String::new());
    let mut worst: f64 = 0.0;
    for &t in times {
        let heat = apply_semigroup(&f0, t)?.field;
        let snaps = snapshot_values(trajs, t)?;
        let mut violations = 0usize;
        let mut column = vec![0.0; snaps.len()];
        for c in 0..grid.n_cells() {
            column.iter_mut().zip(&snaps).for_each(|(x, s)| *x = s[c]);
            let est = MeanEstimate::from_samples(&column);
            if est.mean > heat.values[c] + 3.0 * est.se {
                violations += 1;
            }
        }
        let frac = violations as f64 / grid.n_cells() as f64;
        worst = worst.max(frac);
        rec = rec.metric(format!("violating_fraction_t{t}"), frac);
    }
    rec.passed = worst <= allowance;
    rec.detail = format!(
        "worst violating cell fraction {:.4} (allowance {allowance}) over t in {times:?}, {} replicates",
        worst,
        trajs.len()
    );
    Ok(rec)
}

/// `|mean V_t − Y_0(1)| ≤ 3 SE` at each time.
pub fn mass_mean_check(trajs: &[SolutionTrajectory], y0_mass: f64, times: &[f64]) -> Result<CheckRecord> {
    let grid = grid_of(trajs)?;
    let mut rec = CheckRecord::new("mass mean conserved", true, String::new());
    let mut worst_z: f64 = 0.0;
    for &t in times {
        let k = (t / grid.dt).round() as usize;
        if k >= trajs[0].mass_path.len() {
            return Err(domain(format!("time {t} beyond the mass path")));
        }
        let masses: Vec<f64> = trajs.iter().map(|tr| tr.mass_path[k]).collect();
        let est = MeanEstimate::from_samples(&masses);
        let z = (est.mean - y0_mass).abs() / est.se;
        worst_z = worst_z.max(z);
        rec = rec.metric(format!("mean_t{t}"), est.mean).metric(format!("se_t{t}"), est.se);
    }
    rec.passed = worst_z <= 3.0;
    rec.detail = format!("largest deviation {worst_z:.2} SE from Y0(1)={y0_mass} over t in {times:?}");
    Ok(rec.metric("worst_z", worst_z))
}

/// Pooling rule for the tail-index estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailIndexRule {
    /// Cells with `|x − centre| ≤ window` are pooled...
    pub window: f64,
    /// ...taking every `stride`-th cell to thin out neighbouring copies of one jump.
    pub stride: usize,
    /// Hill order as a fraction of the pooled sample.
    pub fraction: f64,
}

impl Default for TailIndexRule {
    fn default() -> Self {
        Self { window: 2.0, stride: 8, fraction: 0.01 }
    }
}

/// Hill estimate of the right tail of `Ȳ_t(x) − P_tY_0(x)` pooled over interior
/// cells and snapshot times; passes when within `tolerance` of `α`.
pub fn tail_index_check(
    trajs: &[SolutionTrajectory],
    y0: &InitialMeasure,
    alpha: StableIndex,
    times: &[f64],
    centre: &[f64],
    rule: &TailIndexRule,
    tolerance: f64,
) -> Result<CheckRecord> {
    let grid = grid_of(trajs)?;
    let f0 = y0.to_field(grid)?;
    let cells: Vec<usize> = (0..grid.n_cells())
        .step_by(rule.stride.max(1))
        .filter(|&c| {
            let x = grid.cell_center(c);
            (0..grid.d).map(|k| (x[k] - centre[k]).powi(2)).sum::<f64>().sqrt() <= rule.window
        })
        .collect();
    let mut pooled = Vec::new();
    for &t in times {
        let heat = apply_semigroup(&f0, t)?.field;
        for snap in snapshot_values(trajs, t)? {
            pooled.extend(cells.iter().map(|&c| snap[c] - heat.values[c]));
        }
    }
    let k = ((pooled.len() as f64) * rule.fraction).floor() as usize;
    let hill = hill_estimator(&pooled, k);
    let a = alpha.value();
    let passed = (hill - a).abs() <= tolerance;
    Ok(CheckRecord::new(
        "tail index of densities",
        passed,
        format!("Hill {hill:.3} (k={k} of {}) vs alpha={a} +/- {tolerance}", pooled.len()),
    )
    .metric("hill", hill)
    .metric("k", k as f64)
    .metric("pooled", pooled.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub t: f64,
    pub moment: MeanEstimate,
    /// `P_tY_0(x)^q` on the lattice, for reference.
    pub heat_term: f64,
}

/// Log-log slope of `E(Ȳ_t(x)^q)` against `t` over `n_points` log-spaced times in
/// `[t_min, t_max]`, read from probe `probe`; passes when the slope is at least
/// `−(α−1)(d/2)(q/α) − slack`.
#[allow(clippy::too_many_arguments)]
pub fn moment_slope_check(
    trajs: &[SolutionTrajectory],
    y0: &InitialMeasure,
    probe: usize,
    q: f64,
    t_min: f64,
    t_max: f64,
    n_points: usize,
    slack: f64,
) -> Result<(CheckRecord, Vec<MomentPoint>)> {
    let grid = grid_of(trajs)?;
    let spec = trajs[0].spec;
    let series = trajs[0].probes.get(probe).ok_or_else(|| crate::Error::NotRecorded(format!("probe {probe}")))?;
    let cell = grid.cell_of(&series.location).ok_or_else(|| domain("probe outside the box"))?;
    if !(t_min > 0.0 && t_max > t_min) || n_points < 2 {
        return Err(domain("need 0 < t_min < t_max and at least two points"));
    }
    let f0 = y0.to_field(grid)?;
    let mut steps: Vec<usize> = (0..n_points)
        .map(|i| {
            let t = t_min * (t_max / t_min).powf(i as f64 / (n_points - 1) as f64);
            ((t / grid.dt).round() as usize).max(1)
        })
        .collect();
    steps.dedup();
    let mut points = Vec::with_capacity(steps.len());
    for &k in &steps {
        let vals: Vec<f64> = trajs.iter().map(|tr| tr.probes[probe].values[k]).collect();
        let t = k as f64 * grid.dt;
        let heat = apply_semigroup(&f0, t)?.field.values[cell];
        points.push(MomentPoint { t, moment: MeanEstimate::of(&vals, |v| v.powf(q)), heat_term: heat.powf(q) });
    }
    let lx: Vec<f64> = points.iter().map(|p| p.t.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.moment.mean.ln()).collect();
    let lh: Vec<f64> = points.iter().map(|p| p.heat_term.ln()).collect();
    let (slope, _) = linear_fit(&lx, &ly);
    let (heat_slope, _) = linear_fit(&lx, &lh);
    let a = spec.alpha.value();
    let bound_slope = -(a - 1.0) * (spec.d as f64 / 2.0) * (q / a);
    let passed = slope >= bound_slope - slack;
    let rec = CheckRecord::new(
        "moment blow-up no faster than bound shape",
        passed,
        format!(
            "slope {slope:.3} vs bound slope {bound_slope:.3} - {slack} (heat term alone has slope {heat_slope:.3})"
        ),
    )
    .metric("slope", slope)
    .metric("bound_slope", bound_slope)
    .metric("heat_term_slope", heat_slope);
    Ok((rec, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierRow {
    pub eps: f64,
    pub mean_abs_diff: f64,
    pub se: f64,
}

/// `E|ψ_ε * Y_t (x) − Ȳ_t(x)|^q` for box mollifiers of side `ε = (2m+1)h`, `m` from
/// `half_widths` (cells), on the snapshot at `t`.
pub fn mollifier_check(
    trajs: &[SolutionTrajectory],
    t: f64,
    x: &[f64],
    half_widths: &[usize],
    q: f64,
) -> Result<Vec<MollifierRow>> {
    let grid = grid_of(trajs)?;
    let cell = grid.cell_of(x).ok_or_else(|| domain("point outside the box"))?;
    let idx = grid.unflatten(cell);
    let h = grid.cell_width();
    let snaps = snapshot_values(trajs, t)?;
    let mut rows = Vec::new();
    for &m in half_widths {
        if (0..grid.d).any(|k| idx[k] < m || idx[k] + m >= grid.nx) {
            return Err(domain(format!("mollifier of half-width {m} cells leaves the box")));
        }
        let side = 2 * m + 1;
        let diffs: Vec<f64> = snaps
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                for offset in 0..side.pow(grid.d as u32) {
                    let mut o = offset;
                    let mut j = [0usize; 3];
                    for k in (0..grid.d).rev() {
                        j[k] = idx[k] + o % side - m;
                        o /= side;
                    }
                    acc += s[grid.flatten(&j[..grid.d])];
                }
                (acc / side.pow(grid.d as u32) as f64 - s[cell]).abs().powf(q)
            })
            .collect();
        let est = MeanEstimate::from_samples(&diffs);
        rows.push(MollifierRow { eps: side as f64 * h, mean_abs_diff: est.mean, se: est.se });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prm_noise::{NoiseMode, SpaceTimeGrid};
    use crate::rng::RngFactory;
    use crate::spde::{run_ensemble, ModelSpec, RunOptions, Solver};

    fn ensemble(n: usize) -> (Vec<SolutionTrajectory>, InitialMeasure) {
        let g = SpaceTimeGrid::new(1, 4.0, 64, 1e-3, 20).unwrap();
        let s = Solver::new(ModelSpec::new(StableIndex::new(1.5).unwrap(), 0.75, 1).unwrap(), &g, NoiseMode::ExactCell)
            .unwrap();
        let y0 = InitialMeasure::point(vec![0.0625], 1.0);
        let opts = RunOptions { snapshot_times: vec![0.01, 0.02], probes: vec![vec![0.0625]], ..Default::default() };
        let runs = run_ensemble(&s, &y0, &opts, n, &RngFactory::new(21)).into_iter().map(|r| r.unwrap()).collect();
        (runs, y0)
    }

    #[test]
    fn ensemble_checks_produce_records() {
        let (runs, y0) = ensemble(60);
        let mm = mean_measure_check(&runs, &y0, &[0.01, 0.02], 0.01).unwrap();
        assert!(mm.passed, "{}", mm.line());
        let mass = mass_mean_check(&runs, 1.0, &[0.01, 0.02]).unwrap();
        assert!(mass.metrics["worst_z"].is_finite());
        let tail = tail_index_check(&runs, &y0, StableIndex::new(1.5).unwrap(), &[0.02], &[0.0], &TailIndexRule { window: 4.0, stride: 1, fraction: 0.05 }, 0.2).unwrap();
        assert!(tail.metrics["hill"].is_finite());
        let (slope, pts) = moment_slope_check(&runs, &y0, 0, 1.2, 1e-3, 2e-2, 5, 0.15).unwrap();
        assert_eq!(pts.len(), 5);
        assert!((slope.metrics["bound_slope"] + 0.2).abs() < 1e-12);
        assert!(mean_measure_check(&runs, &y0, &[0.015], 0.01).is_err());
    }

    #[test]
    fn mollifier_error_shrinks_to_zero() {
        let (runs, _) = ensemble(20);
        let rows = mollifier_check(&runs, 0.02, &[0.0625], &[6, 3, 1, 0], 1.0).unwrap();
        assert!(rows.windows(2).all(|w| w[1].mean_abs_diff <= w[0].mean_abs_diff + 1e-12), "{rows:?}");
        assert_eq!(rows.last().unwrap().mean_abs_diff, 0.0);
        assert!(mollifier_check(&runs, 0.02, &[0.0625], &[40], 1.0).is_err());
    }
}
