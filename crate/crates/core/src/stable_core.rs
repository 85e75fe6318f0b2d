//! One-sided α-stable laws in the normalization used throughout the crate.
//!
//! * `W_t` is spectrally positive with `log E exp(-λ W_t) = t λ^α`, Lévy measure
//!   `ν(dr) = σ_α r^{-1-α} dr` on `r > 0` and `σ_α = α(α-1)/Γ(2-α)`.
//! * `S_t` is the (α/2)-stable subordinator whose Lévy measure is
//!   `μ(dr) = (σ_α/2) r^{-1-α/2} dr`, so that `E exp(-λ S_t) = exp(-θ t λ^{α/2})`.
//!   With this choice the quadratic variation of `W` is a copy of `S`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{domain, Result};
use crate::rng::open01;

/// Stability index α, restricted to the open interval (1, 2).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct StableIndex(f64);

impl StableIndex {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 1.0 && alpha < 2.0 {
            Ok(Self(alpha))
        } else {
            Err(domain(format!("stable index must lie in (1, 2), got {alpha}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Index of the quadratic-variation subordinator, α/2.
    #[inline]
    pub fn half(self) -> f64 {
        0.5 * self.0
    }
}

impl TryFrom<f64> for StableIndex {
    type Error = crate::error::Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StableIndex> for f64 {
    fn from(a: StableIndex) -> f64 {
        a.0
    }
}

/// Constants fixing the jump measures of `W` and `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyNormalization {
    pub sigma_alpha: f64,
    pub theta: f64,
}

impl LevyNormalization {
    pub fn new(alpha: StableIndex) -> Self {
        let a = alpha.value();
        let sigma_alpha = a * (a - 1.0) / gamma(2.0 - a);
        // ∫ (1 - e^{-λr}) c r^{-1-β} dr = c Γ(1-β)/β · λ^β with c = σ_α/2, β = α/2
        let b = alpha.half();
        let theta = 0.5 * sigma_alpha * gamma(1.0 - b) / b;
        Self { sigma_alpha, theta }
    }
}

/// `log E exp(-λ W_t) = t λ^α`.
pub fn laplace_exponent_stable(alpha: StableIndex, lambda: f64, t: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !(t > 0.0) {
        return Err(domain(format!("need lambda >= 0 and t > 0, got lambda={lambda}, t={t}")));
    }
    Ok(t * lambda.powf(alpha.value()))
}

/// `-log E exp(-λ S_t) = θ t λ^{α/2}`.
pub fn laplace_exponent_subordinator(alpha: StableIndex, lambda: f64, t: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !(t > 0.0) {
        return Err(domain(format!("need lambda >= 0 and t > 0, got lambda={lambda}, t={t}")));
    }
    Ok(LevyNormalization::new(alpha).theta * t * lambda.powf(alpha.half()))
}

/// Density of ν at `r > 0`.
pub fn levy_density_stable(alpha: StableIndex, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(domain(format!("jump size must be positive, got {r}")));
    }
    Ok(LevyNormalization::new(alpha).sigma_alpha * r.powf(-1.0 - alpha.value()))
}

/// ν((ε, ∞)) = σ_α ε^{-α} / α.
pub fn levy_tail_mass(alpha: StableIndex, eps: f64) -> f64 {
    let a = alpha.value();
    LevyNormalization::new(alpha).sigma_alpha * eps.powf(-a) / a
}

/// ∫_ε^∞ r ν(dr) = σ_α ε^{1-α} / (α-1), the compensator of the large jumps.
pub fn levy_tail_first_moment(alpha: StableIndex, eps: f64) -> f64 {
    let a = alpha.value();
    LevyNormalization::new(alpha).sigma_alpha * eps.powf(1.0 - a) / (a - 1.0)
}

/// ∫_0^ε r² ν(dr) = σ_α ε^{2-α} / (2-α): quadratic variation carried by jumps below ε.
pub fn small_jump_quadratic_mass(alpha: StableIndex, eps: f64) -> f64 {
    let a = alpha.value();
    LevyNormalization::new(alpha).sigma_alpha * eps.powf(2.0 - a) / (2.0 - a)
}

/// Share of the Laplace exponent `λ^α` carried by jumps smaller than ε, as a function
/// of `x = λ ε`:  σ_α ∫_0^x (e^{-u} - 1 + u) u^{-1-α} du.  Equals 1 in the limit x → ∞.
pub fn small_jump_exponent_fraction(alpha: StableIndex, x: f64) -> f64 {
    let a = alpha.value();
    let sigma = LevyNormalization::new(alpha).sigma_alpha;
    if x <= 0.0 {
        return 0.0;
    }
    if x > 25.0 {
        // ∫_x^∞ (u - 1) u^{-1-α} du up to an e^{-x} correction; total integral is Γ(-α) = 1/σ_α.
        let tail = x.powf(1.0 - a) / (a - 1.0) - x.powf(-a) / a;
        return (1.0 - sigma * tail).clamp(0.0, 1.0);
    }
    // Σ_{k≥2} (-1)^k x^{k-α} / (k! (k-α))
    let mut sum = 0.0;
    let mut pow_over_fact = x * x / 2.0; // x^k / k!
    let mut k = 2.0;
    loop {
        let term = pow_over_fact / (k - a);
        let signed = if (k as i64) % 2 == 0 { term } else { -term };
        sum += signed;
        if term < 1e-17 * sum.abs().max(1e-300) && k > x {
            break;
        }
        k += 1.0;
        pow_over_fact *= x / k;
    }
    (sigma * sum * x.powf(-a)).clamp(0.0, 1.0)
}

/// Draw of `W_1`: Chambers–Mallows–Stuck with skewness one, scaled so that the
/// Laplace exponent is exactly `λ^α`.
#[inline]
pub fn sample_unit_stable<R: Rng + ?Sized>(alpha: StableIndex, rng: &mut R) -> f64 {
    let a = alpha.value();
    // B = arctan(tan(πα/2))/α reduces to π/2 - π/α on (1, 2)
    let shift = FRAC_PI_2 - PI / a;
    let v = PI * (open01(rng) - 0.5);
    let e = -open01(rng).ln();
    let av = a * (v + shift);
    // With scale |cos(πα/2)|^{1/α} the usual (1 + tan²)^{1/(2α)} prefactor cancels.
    av.sin() / v.cos().powf(1.0 / a) * ((v - av).cos() / e).powf((1.0 - a) / a)
}

/// Draw of `W_t` for `t = speed_time`.
#[inline]
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: StableIndex, speed_time: f64, rng: &mut R) -> f64 {
    debug_assert!(speed_time > 0.0);
    speed_time.powf(1.0 / alpha.value()) * sample_unit_stable(alpha, rng)
}

/// Draw `X` with `E exp(-λ X) = exp(-λ^β)` for `β ∈ (0, 1)` (Kanter's representation).
#[inline]
pub fn sample_positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = PI * open01(rng);
    let e = -open01(rng).ln();
    (beta * u).sin() / u.sin().powf(1.0 / beta) * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta)
}

/// Draw of `S_t`, non-negative.
#[inline]
pub fn sample_subordinator_increment<R: Rng + ?Sized>(
    alpha: StableIndex,
    norm: &LevyNormalization,
    t: f64,
    rng: &mut R,
) -> f64 {
    debug_assert!(t > 0.0);
    let b = alpha.half();
    (norm.theta * t).powf(1.0 / b) * sample_positive_stable(b, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngFactory;
    use crate::stats::{hill_estimator, ks_two_sample, MeanEstimate};

    fn idx(a: f64) -> StableIndex {
        StableIndex::new(a).unwrap()
    }

    #[test]
    fn index_bounds() {
        assert!(StableIndex::new(1.0).is_err());
        assert!(StableIndex::new(2.0).is_err());
        assert!(StableIndex::new(f64::NAN).is_err());
        assert!(StableIndex::new(1.5).is_ok());
    }

    #[test]
    fn gamma_reference_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(1.0) - 1.0).abs() < 1e-14);
        // mpmath: Γ(1/4) = 3.625609908221908311930685155867
        assert!((gamma(0.25) - 3.625_609_908_221_908).abs() < 1e-12);
    }

    #[test]
    fn laplace_exponent_examples() {
        assert_eq!(laplace_exponent_stable(idx(1.5), 0.0, 3.0).unwrap(), 0.0);
        assert!((laplace_exponent_stable(idx(1.5), 2.0, 1.0).unwrap() - 2.828_427_124_746_19).abs() < 1e-12);
        assert_eq!(laplace_exponent_stable(idx(1.2), 1.0, 5.0).unwrap(), 5.0);
        assert!(laplace_exponent_stable(idx(1.5), -1.0, 1.0).is_err());
        assert!(laplace_exponent_stable(idx(1.5), 1.0, 0.0).is_err());
    }

    #[test]
    fn levy_density_examples() {
        // σ_1.5 = 0.75/Γ(1/2), frozen from an mpmath evaluation
        let s = levy_density_stable(idx(1.5), 1.0).unwrap();
        assert!((s - 0.423_142_187_660_817_2).abs() < 1e-12);
        assert!((s - 0.75 / PI.sqrt()).abs() < 1e-14);
        let d4 = levy_density_stable(idx(1.5), 4.0).unwrap();
        assert!((d4 - 0.013_223_193_364_400_54).abs() < 1e-12);
        for a in [1.1, 1.5, 1.9] {
            let r = levy_density_stable(idx(a), 2.6).unwrap() / levy_density_stable(idx(a), 1.3).unwrap();
            assert!((r - 2f64.powf(-1.0 - a)).abs() < 1e-14);
        }
        assert!(levy_density_stable(idx(1.5), 0.0).is_err());
    }

    #[test]
    fn theta_closed_form_matches_quadrature() {
        // mpmath closed form and quadrature of ∫(1-e^{-r}) μ(dr)
        let cases = [(1.2, 0.381_051_869_335_995_3), (1.5, 1.022_765_672_113_168_7), (1.8, 1.657_822_970_327_457_4)];
        for (a, want) in cases {
            let th = LevyNormalization::new(idx(a)).theta;
            assert!((th - want).abs() < 1e-10, "alpha={a}: {th} vs {want}");
        }
        // Independent midpoint quadrature in log-space of the Lévy–Khintchine integral.
        let alpha = idx(1.5);
        let c = 0.5 * LevyNormalization::new(alpha).sigma_alpha;
        let (lo, hi, n) = (-30.0f64, 12.0f64, 200_000);
        let h = (hi - lo) / n as f64;
        let quad: f64 = (0..n)
            .map(|i| {
                let r = (lo + (i as f64 + 0.5) * h).exp();
                -(-r).exp_m1() * c * r.powf(-1.75) * r * h
            })
            .sum();
        let tail = c * hi.exp().powf(-0.75) / 0.75; // ∫_{e^hi}^∞ r^{-1.75}
        let head = c * lo.exp().powf(0.25) / 0.25; // ∫_0^{e^lo} r · r^{-1.75}
        assert!((quad + tail + head - LevyNormalization::new(alpha).theta).abs() < 1e-6);
    }

    #[test]
    fn small_jump_fraction_reference_values() {
        // 1.5 · F(x)·σ with F from mpmath quadrature
        let s = LevyNormalization::new(idx(1.5)).sigma_alpha;
        let cases = [
            (0.5, 0.670_571_784_166_081_8),
            (1.0, 0.903_450_648_280_766_9),
            (5.0, 1.528_389_580_398_048_5),
            (30.0, 2.002_180_633_666_912),
        ];
        for (x, f) in cases {
            let got = small_jump_exponent_fraction(idx(1.5), x);
            assert!((got - s * f).abs() < 1e-9, "x={x}: {got} vs {}", s * f);
        }
        assert!(small_jump_exponent_fraction(idx(1.5), 1e6) > 0.99);
        assert_eq!(small_jump_exponent_fraction(idx(1.5), 0.0), 0.0);
    }

    #[test]
    fn tail_moments_match_quadrature() {
        let a = idx(1.5);
        let eps: f64 = 0.3;
        let n = 400_000;
        let (lo, hi) = (eps.ln(), 40.0f64);
        let h = (hi - lo) / n as f64;
        let (mut m0, mut m1) = (0.0, 0.0);
        for i in 0..n {
            let r = (lo + (i as f64 + 0.5) * h).exp();
            let w = levy_density_stable(a, r).unwrap() * r * h;
            m0 += w;
            m1 += w * r;
        }
        assert!((m0 - levy_tail_mass(a, eps)).abs() < 1e-6);
        assert!((m1 - levy_tail_first_moment(a, eps)).abs() < 1e-5);
    }

    #[test]
    fn stable_draws_have_laplace_transform_and_zero_mean() {
        let f = RngFactory::new(11);
        let mut rng = f.stream(crate::rng::tag::STABLE, 0);
        let a = idx(1.5);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_stable_increment(a, 1.0, &mut rng)).collect();
        let lap = MeanEstimate::of(&xs, |x| (-x).exp());
        assert!(lap.within(1f64.exp(), 4.0), "{lap:?}");
        let m = MeanEstimate::from_samples(&xs);
        assert!(m.mean.abs() < 4.0 * m.se, "{m:?}");
        assert!(xs.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn subordinator_draws_nonnegative_with_laplace() {
        let f = RngFactory::new(12);
        let mut rng = f.stream(crate::rng::tag::SUBORDINATOR, 0);
        let a = idx(1.5);
        let norm = LevyNormalization::new(a);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_subordinator_increment(a, &norm, 1.0, &mut rng)).collect();
        assert!(xs.iter().all(|x| *x >= 0.0));
        let lap = MeanEstimate::of(&xs, |x| (-x).exp());
        assert!(lap.within((-norm.theta).exp(), 4.0), "{lap:?}");
    }

    #[test]
    fn subordinator_tail_index() {
        let mut rng = RngFactory::new(13).stream(crate::rng::tag::SUBORDINATOR, 1);
        let a = idx(1.5);
        let norm = LevyNormalization::new(a);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_subordinator_increment(a, &norm, 1.0, &mut rng)).collect();
        let h = hill_estimator(&xs, 1000);
        assert!((h - 0.75).abs() < 0.15, "{h}");
    }

    #[test]
    fn subordinator_self_similarity() {
        let f = RngFactory::new(14);
        let a = idx(1.5);
        let norm = LevyNormalization::new(a);
        let lambda: f64 = 2.0;
        let mut r1 = f.stream(crate::rng::tag::SUBORDINATOR, 2);
        let mut r2 = f.stream(crate::rng::tag::SUBORDINATOR, 3);
        let xs: Vec<f64> = (0..50_000).map(|_| lambda * sample_subordinator_increment(a, &norm, 1.0, &mut r1)).collect();
        let ys: Vec<f64> = (0..50_000)
            .map(|_| sample_subordinator_increment(a, &norm, lambda.powf(a.half()), &mut r2))
            .collect();
        assert!(ks_two_sample(&xs, &ys).passes(0.01));
    }
}
