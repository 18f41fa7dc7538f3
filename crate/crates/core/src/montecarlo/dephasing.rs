//! Per-emitter random phase kicks whose ensemble average reproduces a
//! stretched-exponential coherence decay.
//!
//! For `1 ≤ β ≤ 2` the kick is a symmetric β-stable variable with scale
//! `2τ/T2`, whose characteristic function gives `E[cos ξ] = exp[-(2τ/T2)^β]`:
//! Cauchy at β = 1, Gaussian at β = 2. Stable laws do not exist above β = 2;
//! there a fraction `exp[-(2τ/T2)^β]` of emitters keeps its phase (with
//! stochastic rounding of the count) and the rest are fully scrambled.
//!
//! The Cauchy and Gaussian cases map one stratified uniform per emitter
//! through the quantile function. Other β use a Latin hypercube over both
//! Chambers–Mallows–Stuck inputs, which converges more slowly.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::seq::SliceRandom;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Draws `n` phase kicks for a total evolution time `two_tau`.
pub fn dephasing_kicks<R: Rng + ?Sized>(n: usize, two_tau: f64, t2: f64, beta: f64, rng: &mut R) -> Vec<f64> {
    let scale = two_tau / t2;
    if n == 0 || scale == 0.0 {
        return vec![0.0; n];
    }
    if beta > 2.0 {
        let keep = (-scale.powf(beta)).exp();
        let n_keep = ((keep * n as f64 + rng.random::<f64>()).floor() as usize).min(n);
        let mut kicks = vec![0.0; n_keep];
        kicks.extend(stratified(n - n_keep, rng).iter().map(|u| TAU * u));
        kicks.shuffle(rng);
        return kicks;
    }
    if beta == 2.0 {
        // one stratified uniform per emitter through the Gaussian quantile
        let gauss = Normal::new(0.0, std::f64::consts::SQRT_2 * scale).expect("finite positive scale");
        return stratified(n, rng)
            .iter()
            .map(|&u| gauss.inverse_cdf(u.min(1.0 - 1e-16)))
            .collect();
    }
    let strata_a = stratified(n, rng);
    let strata_b = stratified(n, rng);
    strata_a
        .iter()
        .zip(&strata_b)
        .map(|(&ua, &ub)| {
            let v = PI * (ua - 0.5);
            let w = -ub.ln();
            scale * symmetric_stable(beta, v, w)
        })
        .collect()
}

/// One stratified uniform per stratum `((i + U)/n)` in shuffled order, all in (0, 1].
fn stratified<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n)
        .map(|i| (i as f64 + 1.0 - rng.random::<f64>()) / n as f64)
        .collect();
    out.shuffle(rng);
    out
}

/// Chambers–Mallows–Stuck transform for a standard symmetric α-stable
/// variable with characteristic function `exp(-|t|^α)`, from `v` uniform on
/// (-π/2, π/2) and `w` standard exponential.
fn symmetric_stable(alpha: f64, v: f64, w: f64) -> f64 {
    let v = v.clamp(-FRAC_PI_2 + 1e-15, FRAC_PI_2 - 1e-15);
    if alpha == 1.0 {
        return v.tan();
    }
    let base = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    let tail = ((1.0 - alpha) * v).cos() / w;
    base * tail.powf((1.0 - alpha) / alpha)
}
