//! Self-contained checks behind `verify <test>`.

use rayon::prelude::*;

use crate::diagnostics::{gamblers_ruin_experiment, CheckRecord, RuinSettings};
use crate::error::Result;
use crate::prm_noise::SpaceTimeGrid;
use crate::rng::{tag, RngFactory};
use crate::stable_core::{sample_stable_increment, sample_subordinator_increment, LevyNormalization, StableIndex};
use crate::stats::{ks_two_sample, MeanEstimate};
use crate::walsh::{bdg_ratio_experiment, inner_clock, sample_terminal_values, BdgCase, GridIntegrand};

use super::config::Profile;
use super::Table;

/// Checks and tables from one verification.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub checks: Vec<CheckRecord>,
    pub tables: Vec<Table>,
}

const BLOCK: usize = 1 << 14;

/// `n` draws, in fixed blocks so the result does not depend on the thread count.
fn blocked_draws<F>(n: usize, stream_tag: u64, factory: &RngFactory, draw: F) -> Vec<f64>
where
    F: Fn(&mut crate::rng::StreamRng) -> f64 + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let parts: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = factory.stream(stream_tag, b as u64);
            let m = BLOCK.min(n - b * BLOCK);
            (0..m).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.concat()
}

/// `E e^{−λW_1}` against `e^{λ^α}`: relative error below 1% and within 3 SE.
pub fn stable_laplace(alpha: StableIndex, lambdas: &[f64], n: usize, factory: &RngFactory) -> Outcome {
    let a = alpha.value();
    let w = blocked_draws(n, tag::STABLE, factory, |rng| sample_stable_increment(alpha, 1.0, rng));
    let mut out = Outcome::default();
    let mut table = Table::new("laplace", &["alpha", "lambda", "n", "mean", "se", "target", "rel_err"]);
    for &l in lambdas {
        let est = MeanEstimate::of(&w, |x| (-l * x).exp());
        let target = l.powf(a).exp();
        let rel = (est.mean - target).abs() / target;
        let passed = rel < 0.01 && est.within(target, 3.0);
        table.push(&[a, l, n as f64, est.mean, est.se, target, rel]);
        out.checks.push(
            CheckRecord::new(
                format!("stable laplace alpha={a} lambda={l}"),
                passed,
                format!("E exp(-lW1) = {:.6} +/- {:.1e} vs {target:.6}, rel err {rel:.2e}", est.mean, est.se),
            )
            .metric("rel_err", rel)
            .metric("z", (est.mean - target).abs() / est.se),
        );
    }
    out.tables.push(table);
    out
}

/// `E e^{−S_1}` against `e^{−θ}` within 3 SE.
pub fn subordinator_laplace(alpha: StableIndex, n: usize, factory: &RngFactory) -> Outcome {
    let norm = LevyNormalization::new(alpha);
    let s = blocked_draws(n, tag::SUBORDINATOR, factory, |rng| sample_subordinator_increment(alpha, &norm, 1.0, rng));
    let est = MeanEstimate::of(&s, |x| (-x).exp());
    let target = (-norm.theta).exp();
    let mut table = Table::new("laplace", &["alpha", "theta", "n", "mean", "se", "target"]);
    table.push(&[alpha.value(), norm.theta, n as f64, est.mean, est.se, target]);
    let check = CheckRecord::new(
        format!("subordinator laplace alpha={}", alpha.value()),
        est.within(target, 3.0),
        format!("E exp(-S1) = {:.6} +/- {:.1e} vs exp(-theta) = {target:.6} (theta = {:.7})", est.mean, est.se, norm.theta),
    )
    .metric("theta", norm.theta)
    .metric("z", (est.mean - target).abs() / est.se);
    Outcome { checks: vec![check], tables: vec![table] }
}

/// Ledger quadratic variation of `W` over `[0, 1]` against draws of `S_1`.
pub fn qv_subordinator(alpha: StableIndex, n: usize, factory: &RngFactory) -> Result<Outcome> {
    let rep = crate::walsh::quadratic_variation_law_test(alpha, 1.0, n, 0.01, factory)?;
    let passed = rep.ks.p_value > 0.01 && rep.missing_fraction <= 0.01;
    let mut table = Table::new("qv", &["alpha", "n", "eps", "missing_fraction", "mean_jumps", "ks_d", "ks_p"]);
    table.push(&[alpha.value(), n as f64, rep.eps, rep.missing_fraction, rep.mean_jumps_per_path, rep.ks.statistic, rep.ks.p_value]);
    let check = CheckRecord::new(
        format!("quadratic variation is the subordinator alpha={}", alpha.value()),
        passed,
        format!(
            "KS D = {:.4}, p = {:.3} (eps = {:.3e}, missing QV share {:.1e})",
            rep.ks.statistic, rep.ks.p_value, rep.eps, rep.missing_fraction
        ),
    )
    .metric("p", rep.ks.p_value)
    .metric("eps", rep.eps);
    Ok(Outcome { checks: vec![check], tables: vec![table] })
}

/// Grid and integrand used by the integral-representation check.
pub fn profile_case(profile: Profile) -> (SpaceTimeGrid, GridIntegrand) {
    let g = SpaceTimeGrid::new(1, 1.0, 16, 0.05, 20).expect("fixed grid is valid");
    let phi = match profile {
        Profile::Box => GridIntegrand::from_fn(&g, |_, x| if x[0].abs() <= 0.5 { 1.0 } else { 0.0 }),
        Profile::Triangle => GridIntegrand::from_fn(&g, |_, x| (1.0 - x[0].abs()).max(0.0)),
    };
    (g, phi)
}

/// Terminal `(φ·L)_1` against `W_{T_φ(1)}` by two-sample KS.
pub fn integral_rep(alpha: StableIndex, profile: Profile, n: usize, factory: &RngFactory) -> Result<Outcome> {
    let (g, phi) = profile_case(profile);
    let clock = *inner_clock(&phi, alpha, &g).last().unwrap_or(&0.0);
    let terminal = sample_terminal_values(&phi, &g, alpha, n, factory)?;
    let direct = blocked_draws(n, tag::STABLE ^ 0x1, factory, |rng| sample_stable_increment(alpha, clock, rng));
    let ks = ks_two_sample(&terminal, &direct);
    let label = match profile {
        Profile::Box => "box",
        Profile::Triangle => "triangle",
    };
    let mut values = Table::new(&format!("integral_{label}"), &["replicate", "integral", "time_changed"]);
    for (i, (a, b)) in terminal.iter().zip(&direct).enumerate() {
        values.push(&[i as f64, *a, *b]);
    }
    let check = CheckRecord::new(
        format!("integral is time-changed stable ({label})"),
        ks.p_value > 0.01,
        format!("KS D = {:.4}, p = {:.3}, clock T = {clock:.4}", ks.statistic, ks.p_value),
    )
    .metric("p", ks.p_value)
    .metric("clock", clock);
    Ok(Outcome { checks: vec![check], tables: vec![values] })
}

/// `ρ(φ)` at `q = 1`: invariant under `φ → 2φ` and under doubling the support,
/// and stable when the sample size doubles.
pub fn bdg_ratio(alpha: StableIndex, n: usize, factory: &RngFactory) -> Result<Outcome> {
    // cells of width 1/4, so both indicator supports are unions of cells
    let g = SpaceTimeGrid::new(1, 1.0, 8, 0.01, 100)?;
    let unit = GridIntegrand::from_fn(&g, |_, x| if x[0].abs() <= 0.5 { 1.0 } else { 0.0 });
    let wide = GridIntegrand::from_fn(&g, |_, _| 1.0);
    let cases = [
        BdgCase { label: "phi".into(), grid: g.clone(), phi: unit.clone() },
        BdgCase { label: "2phi".into(), grid: g.clone(), phi: unit.scaled(2.0) },
        BdgCase { label: "double volume".into(), grid: g.clone(), phi: wide },
    ];
    let rows = bdg_ratio_experiment(alpha, &cases, 1.0, n, factory)?;
    let big = bdg_ratio_experiment(alpha, &cases[..1], 1.0, 2 * n, factory)?;
    let close = |a: f64, sa: f64, b: f64, sb: f64| (a - b).abs() <= 3.0 * (sa * sa + sb * sb).sqrt();
    let base = &rows[0];
    let scale_ok = close(base.ratio, base.ratio_se, rows[1].ratio, rows[1].ratio_se);
    let volume_ok = close(base.ratio, base.ratio_se, rows[2].ratio, rows[2].ratio_se);
    let n_ok = close(base.ratio, base.ratio_se, big[0].ratio, big[0].ratio_se);
    let finite = rows.iter().chain(&big).all(|r| r.ratio.is_finite() && r.ratio > 0.0);
    let mut table = Table::new("bdg", &["case", "n", "sup_moment", "clock_moment", "ratio", "ratio_se"]);
    for (i, r) in rows.iter().chain(&big).enumerate() {
        table.push(&[i as f64, r.n_samples as f64, r.sup_moment.mean, r.clock_moment.mean, r.ratio, r.ratio_se]);
    }
    let check = CheckRecord::new(
        format!("BDG ratio invariance alpha={}", alpha.value()),
        scale_ok && volume_ok && n_ok && finite,
        format!(
            "rho = {:.4} +/- {:.4}; 2phi {:.4}; double volume {:.4} +/- {:.4}; 2N {:.4} +/- {:.4}",
            base.ratio, base.ratio_se, rows[1].ratio, rows[2].ratio, rows[2].ratio_se, big[0].ratio, big[0].ratio_se
        ),
    )
    .metric("rho", base.ratio)
    .metric("rho_2phi", rows[1].ratio)
    .metric("rho_volume", rows[2].ratio)
    .metric("rho_2n", big[0].ratio);
    Ok(Outcome { checks: vec![check], tables: vec![table] })
}

/// Estimate of `P(τ̂_{b^{1−δ}} < τ̂_{−b})` below `b^δ + 3 SE`, with fewer than 5% censored paths.
pub fn gamblers_ruin(alpha: StableIndex, b: f64, delta: f64, n: usize, factory: &RngFactory) -> Result<Outcome> {
    let est = gamblers_ruin_experiment(alpha, b, delta, n, factory, &RuinSettings::default())?;
    let neither = est.neither_fraction();
    let passed = est.within_bound() && neither < 0.05;
    let mut table = Table::new(
        "ruin",
        &["alpha", "b", "delta", "n", "up", "down", "neither", "estimate", "se", "wilson_low", "wilson_high", "bound", "exact"],
    );
    table.push(&[
        est.alpha,
        b,
        delta,
        n as f64,
        est.up as f64,
        est.down as f64,
        est.neither as f64,
        est.estimate,
        est.se,
        est.wilson_low,
        est.wilson_high,
        est.bound,
        est.exact,
    ]);
    let check = CheckRecord::new(
        format!("gambler's ruin b={b} delta={delta}"),
        passed,
        format!(
            "estimate {:.4} +/- {:.4} vs bound {:.4} (scale-function value {:.4}), neither {:.2}%",
            est.estimate,
            est.se,
            est.bound,
            est.exact,
            100.0 * neither
        ),
    )
    .metric("estimate", est.estimate)
    .metric("bound", est.bound)
    .metric("neither_fraction", neither);
    Ok(Outcome { checks: vec![check], tables: vec![table] })
}
