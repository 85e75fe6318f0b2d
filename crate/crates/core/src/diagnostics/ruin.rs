//! Two-sided exit of a spectrally positive stable path: up through `b^{1−δ}` or
//! down to `−b`. The path has no negative jumps, so it reaches `−b` by creeping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::{tag, RngFactory};
use crate::stable_core::{sample_stable_increment, StableIndex};
use crate::stats::wilson_interval;

/// Step control for the path simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuinSettings {
    /// Each step runs for `(κ · distance to the nearer level)^α`.
    pub kappa: f64,
    /// Paths still inside after `horizon_factor · (a+b)^α` count as "neither".
    pub horizon_factor: f64,
    /// A path within `creep_floor · b` of `−b` is counted as having reached it.
    pub creep_floor: f64,
}

impl Default for RuinSettings {
    fn default() -> Self {
        Self { kappa: 0.05, horizon_factor: 200.0, creep_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuinEstimate {
    pub alpha: f64,
    pub b: f64,
    pub delta: f64,
    pub up_level: f64,
    pub n_samples: usize,
    pub up: usize,
    pub down: usize,
    pub neither: usize,
    pub estimate: f64,
    pub se: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// `b^δ`.
    pub bound: f64,
    /// `1 − (a/(a+b))^{α−1}` from the scale function `x^{α−1}/Γ(α)`.
    pub exact: f64,
}

impl RuinEstimate {
    pub fn neither_fraction(&self) -> f64 {
        self.neither as f64 / self.n_samples as f64
    }

    /// `estimate ≤ b^δ + 3 SE`.
    pub fn within_bound(&self) -> bool {
        self.estimate <= self.bound + 3.0 * self.se
    }
}

/// Probability of passing `+a` before `−b`, started from 0.
pub fn gamblers_ruin_exact(alpha: StableIndex, a: f64, b: f64) -> f64 {
    1.0 - (a / (a + b)).powf(alpha.value() - 1.0)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Exit {
    Up,
    Down,
    Neither,
}

fn simulate_exit<R: rand::Rng + ?Sized>(alpha: StableIndex, a: f64, b: f64, s: &RuinSettings, rng: &mut R) -> Exit {
    let horizon = s.horizon_factor * (a + b).powf(alpha.value());
    let floor = s.creep_floor * b;
    let (mut w, mut t) = (0.0f64, 0.0f64);
    loop {
        let dist = (a - w).min(w + b);
        let dt = (s.kappa * dist).powf(alpha.value());
        w += sample_stable_increment(alpha, dt, rng);
        t += dt;
        if w >= a {
            return Exit::Up;
        }
        if w + b <= floor {
            return Exit::Down;
        }
        if t >= horizon {
            return Exit::Neither;
        }
    }
}

/// Empirical `P(τ̂_{b^{1−δ}} < τ̂_{−b})` with a Wilson interval.
pub fn gamblers_ruin_experiment(
    alpha: StableIndex,
    b: f64,
    delta: f64,
    n_samples: usize,
    factory: &RngFactory,
    settings: &RuinSettings,
) -> Result<RuinEstimate> {
    if !(b > 0.0 && b < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("need b, delta in (0, 1), got b={b}, delta={delta}")));
    }
    if n_samples == 0 {
        return Err(domain("need at least one path"));
    }
    let a = b.powf(1.0 - delta);
    let exits: Vec<Exit> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = factory.stream(tag::RUIN, i);
            simulate_exit(alpha, a, b, settings, &mut rng)
        })
        .collect();
    let up = exits.iter().filter(|e| **e == Exit::Up).count();
    let down = exits.iter().filter(|e| **e == Exit::Down).count();
    let neither = n_samples - up - down;
    let p = up as f64 / n_samples as f64;
    let (wilson_low, wilson_high) = wilson_interval(up, n_samples, 1.96);
    Ok(RuinEstimate {
        alpha: alpha.value(),
        b,
        delta,
        up_level: a,
        n_samples,
        up,
        down,
        neither,
        estimate: p,
        se: (p * (1.0 - p) / n_samples as f64).sqrt(),
        wilson_low,
        wilson_high,
        bound: b.powf(delta),
        exact: gamblers_ruin_exact(alpha, a, b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha() -> StableIndex {
        StableIndex::new(1.5).unwrap()
    }

    #[test]
    fn exact_formula_values() {
        // b = 0.01, delta = 0.5: a = 0.1, 1 - sqrt(10/11)
        let p = gamblers_ruin_exact(alpha(), 0.1, 0.01);
        assert!((p - (1.0 - (10.0f64 / 11.0).sqrt())).abs() < 1e-15);
        assert!(p <= 0.1);
        assert!(gamblers_ruin_exact(alpha(), 0.2, 0.04) <= 0.2);
        assert!(gamblers_ruin_exact(alpha(), 0.01f64.powf(0.75), 0.01) <= 0.01f64.powf(0.25));
    }

    #[test]
    fn simulation_matches_scale_function() {
        let f = RngFactory::new(17);
        for (b, delta) in [(0.5, 0.5), (0.1, 0.3)] {
            let est = gamblers_ruin_experiment(alpha(), b, delta, 20_000, &f, &RuinSettings::default()).unwrap();
            assert!(est.neither_fraction() < 0.01);
            assert!((est.estimate - est.exact).abs() < 4.0 * est.se + 0.005, "{est:?}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let f = RngFactory::new(1);
        let s = RuinSettings::default();
        assert!(gamblers_ruin_experiment(alpha(), 1.5, 0.5, 10, &f, &s).is_err());
        assert!(gamblers_ruin_experiment(alpha(), 0.1, 0.0, 10, &f, &s).is_err());
        assert!(gamblers_ruin_experiment(alpha(), 0.1, 0.5, 0, &f, &s).is_err());
    }

    #[test]
    fn short_horizon_counts_neither() {
        let f = RngFactory::new(2);
        let s = RuinSettings { horizon_factor: 1e-6, ..Default::default() };
        let est = gamblers_ruin_experiment(alpha(), 0.1, 0.5, 200, &f, &s).unwrap();
        assert!(est.neither > 150);
        assert_eq!(est.up + est.down + est.neither, 200);
    }
}
