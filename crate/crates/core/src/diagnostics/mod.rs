//! Measurements on simulated trajectories and the pass/fail records built from them.

mod boundary;
mod ensemble;
mod ruin;
mod support;

pub use boundary::{
    boundary_refinement_experiment, snap_boundary_point, BoundaryRecorder, RefinementReport, ResidualPath,
};
pub use ensemble::{
    mass_mean_check, mean_measure_check, mollifier_check, moment_slope_check, tail_index_check, MollifierRow,
    MomentPoint, TailIndexRule,
};
pub use ruin::{gamblers_ruin_exact, gamblers_ruin_experiment, RuinEstimate, RuinSettings};
pub use support::{mass_fraction_radius, support_study, threshold_radius, SupportCurve, SupportReport, SupportSettings};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spde::SolutionTrajectory;

/// `A_t(x)` (or `𝔸̄_t(z)`) at every step boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeCurve {
    pub location: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Left-endpoint accumulation of a density series sampled at step boundaries.
pub fn accumulate_local_time(location: Vec<f64>, series: &[f64], dt: f64) -> LocalTimeCurve {
    let mut values = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    values.push(0.0);
    for v in &series[..series.len().saturating_sub(1)] {
        acc += v * dt;
        values.push(acc);
    }
    let times = (0..values.len()).map(|k| k as f64 * dt).collect();
    LocalTimeCurve { location, times, values }
}

/// `A_t(x) = ∫_0^t Ȳ_s(x) ds`; `x` must have been recorded as a probe.
pub fn local_time(traj: &SolutionTrajectory, x: &[f64]) -> Result<LocalTimeCurve> {
    let grid = &traj.grid;
    let cell = grid.cell_of(x).ok_or_else(|| Error::Domain(format!("{x:?} lies outside the box")))?;
    let series = traj
        .probes
        .iter()
        .find(|p| grid.cell_of(&p.location) == Some(cell))
        .ok_or_else(|| Error::NotRecorded(format!("no probe in the cell of {x:?}")))?;
    Ok(accumulate_local_time(x.to_vec(), &series.values, grid.dt))
}

/// `𝔸̄_t(z)` for a level recorded in the run options.
pub fn projected_local_time(traj: &SolutionTrajectory, z: f64) -> Result<LocalTimeCurve> {
    let grid = &traj.grid;
    if grid.d < 2 {
        return Err(Error::Domain("projected local time needs d >= 2".into()));
    }
    let i = grid.axis_index(z).ok_or_else(|| Error::Domain(format!("level {z} lies outside the box")))?;
    let series = traj
        .projected
        .iter()
        .find(|p| grid.axis_index(p.location[0]) == Some(i))
        .ok_or_else(|| Error::NotRecorded(format!("projected level {z} was not recorded")))?;
    Ok(accumulate_local_time(vec![z], &series.values, grid.dt))
}

/// One pass/fail line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into(), metrics: BTreeMap::new() }
    }

    pub fn metric(mut self, key: impl Into<String>, value: f64) -> Self {
        self.metrics.insert(key.into(), value);
        self
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<CheckRecord>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl DiagnosticsReport {
    pub fn push(&mut self, check: CheckRecord) {
        self.checks.push(check);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
