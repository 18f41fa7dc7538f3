//! Least-squares fits of decay curves and phase fringes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions, LmReport, Model, Problem};
use crate::echo_model::homogeneous_linewidth;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode {
    Fixed(f64),
    Free,
}

/// Treatment of an additive baseline term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FloorMode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
    pub unit: String,
    pub free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FitParam>,
    /// Quantities computed from the fitted parameters, with propagated sigmas.
    pub derived: Vec<FitParam>,
    pub residual_rms: f64,
    pub chi2: f64,
    pub converged: bool,
    pub n_points: usize,
    pub iterations: usize,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<&FitParam> {
        self.params.iter().chain(&self.derived).find(|p| p.name == name)
    }

    /// Value of a fitted or derived quantity, NaN when absent.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).map_or(f64::NAN, |p| p.sigma)
    }
}

/// `A·exp(-t/T) + C`.
pub struct ExponentialDecay;

impl Model for ExponentialDecay {
    fn param_names(&self) -> &'static [&'static str] {
        &["amplitude", "lifetime", "offset"]
    }
    fn eval(&self, t: f64, p: &[f64]) -> f64 {
        p[0] * (-t / p[1]).exp() + p[2]
    }
    fn jacobian_row(&self, t: f64, p: &[f64], row: &mut [f64]) {
        let e = (-t / p[1]).exp();
        row[0] = e;
        row[1] = p[0] * e * t / (p[1] * p[1]);
        row[2] = 1.0;
    }
}

/// `V0·exp[-2(x/T2)^β] + F`.
pub struct StretchedVarianceDecay;

impl Model for StretchedVarianceDecay {
    fn param_names(&self) -> &'static [&'static str] {
        &["v0", "t2", "beta", "floor"]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * (-2.0 * stretch(x, p[1], p[2])).exp() + p[3]
    }
    fn jacobian_row(&self, x: f64, p: &[f64], row: &mut [f64]) {
        let s = stretch(x, p[1], p[2]);
        let e = (-2.0 * s).exp();
        row[0] = e;
        row[1] = 2.0 * p[0] * e * p[2] * s / p[1];
        row[2] = -2.0 * p[0] * e * s * log_ratio(x, p[1]);
        row[3] = 1.0;
    }
}

/// `a + b·exp[-(x/T2)^β]`.
pub struct StretchedMeanDecay;

impl Model for StretchedMeanDecay {
    fn param_names(&self) -> &'static [&'static str] {
        &["offset", "amplitude", "t2", "beta"]
    }
    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * (-stretch(x, p[2], p[3])).exp()
    }
    fn jacobian_row(&self, x: f64, p: &[f64], row: &mut [f64]) {
        let s = stretch(x, p[2], p[3]);
        let e = (-s).exp();
        row[0] = 1.0;
        row[1] = e;
        row[2] = p[1] * e * p[3] * s / p[2];
        row[3] = -p[1] * e * s * log_ratio(x, p[2]);
    }
}

/// `C + A·cos(φ - φ0)`.
pub struct CosineFringe;

impl Model for CosineFringe {
    fn param_names(&self) -> &'static [&'static str] {
        &["offset", "amplitude", "phase"]
    }
    fn eval(&self, phi: f64, p: &[f64]) -> f64 {
        p[0] + p[1] * (phi - p[2]).cos()
    }
    fn jacobian_row(&self, phi: f64, p: &[f64], row: &mut [f64]) {
        row[0] = 1.0;
        row[1] = (phi - p[2]).cos();
        row[2] = p[1] * (phi - p[2]).sin();
    }
}

/// `(x/T)^β`, NaN outside the physical domain so the optimizer rejects such steps.
fn stretch(x: f64, t: f64, beta: f64) -> f64 {
    if !(t > 0.0 && beta > 0.0) {
        return f64::NAN;
    }
    (x / t).powf(beta)
}

fn log_ratio(x: f64, t: f64) -> f64 {
    if x > 0.0 {
        (x / t).ln()
    } else {
        0.0
    }
}

/// Per-point standard error of a variance estimate from `n` samples.
pub fn variance_point_sigmas(variances: &[f64], n_samples: &[usize]) -> Result<Vec<f64>> {
    if variances.len() != n_samples.len() {
        return invalid("variance and sample-count lengths differ");
    }
    variances
        .iter()
        .zip(n_samples)
        .map(|(&v, &n)| {
            if n < 2 {
                return invalid("variance sigma needs at least 2 samples");
            }
            Ok(v.abs() * (2.0 / (n as f64 - 1.0)).sqrt())
        })
        .collect()
}

fn weights_from_sigmas(sigmas: Option<&[f64]>, n: usize) -> Result<Option<Vec<f64>>> {
    let Some(s) = sigmas else { return Ok(None) };
    if s.len() != n {
        return invalid("sigma length differs from data length");
    }
    if s.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return invalid("sigmas must be finite and > 0");
    }
    Ok(Some(s.iter().map(|s| 1.0 / (s * s)).collect()))
}

fn run<M: Model>(
    model: &M,
    x: &[f64],
    y: &[f64],
    sigmas: Option<&[f64]>,
    p0: &[f64],
    free: &[bool],
) -> Result<LmReport> {
    let weights = weights_from_sigmas(sigmas, x.len())?;
    let problem = Problem {
        model,
        x,
        y,
        weights: weights.as_deref(),
        free,
    };
    minimize(&problem, p0, &LmOptions::default())
}

fn build_result<M: Model>(
    name: &str,
    model: &M,
    units: &[&str],
    free: &[bool],
    n_points: usize,
    r: &LmReport,
) -> FitResult {
    let params = model
        .param_names()
        .iter()
        .enumerate()
        .map(|(i, n)| FitParam {
            name: n.to_string(),
            value: r.params[i],
            sigma: r.sigma(i),
            unit: units[i].to_string(),
            free: free[i],
        })
        .collect();
    FitResult {
        model: name.to_string(),
        params,
        derived: Vec::new(),
        residual_rms: r.residual_rms,
        chi2: r.chi2,
        converged: r.converged,
        n_points,
        iterations: r.iterations,
        initial_gradient_norm: r.initial_gradient_norm,
        final_gradient_norm: r.final_gradient_norm,
    }
}

fn check_xy(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return invalid("x and y lengths differ");
    }
    if x.len() < min_points {
        return invalid(format!("need at least {min_points} points, got {}", x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return invalid("data must be finite");
    }
    Ok(())
}

/// Weighted least-squares line; returns `(slope, intercept)`.
fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let mx = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn median_positive(x: &[f64]) -> f64 {
    let mut v: Vec<f64> = x.iter().copied().filter(|x| *x > 0.0).collect();
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Start values `(amplitude, T, β)` for `base + amplitude·exp[-rate·(x/T)^β]`
/// from a double-logarithmic linearization.
fn stretched_start(x: &[f64], y: &[f64], base: f64, rate: f64, beta: BetaMode) -> (f64, f64, f64) {
    let first = x
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    let mut amp = y[first] - base;
    if !(amp > 0.0) {
        amp = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - base;
    }
    let fallback_t = median_positive(x);
    let fallback_beta = match beta {
        BetaMode::Fixed(b) => b,
        BetaMode::Free => 1.0,
    };
    if !(amp > 0.0) {
        return (amp.abs().max(1e-300), fallback_t, fallback_beta);
    }
    let (mut lx, mut ll) = (Vec::new(), Vec::new());
    for (&xi, &yi) in x.iter().zip(y) {
        let r = (yi - base) / amp;
        if xi > 0.0 && r > 0.02 && r < 0.98 {
            lx.push(xi.ln());
            ll.push((-r.ln() / rate).ln());
        }
    }
    match beta {
        BetaMode::Fixed(b) => {
            if lx.is_empty() {
                return (amp, fallback_t, b);
            }
            let ln_t = lx.iter().zip(&ll).map(|(x, l)| x - l / b).sum::<f64>() / lx.len() as f64;
            (amp, ln_t.exp(), b)
        }
        BetaMode::Free => {
            let ones = vec![1.0; lx.len()];
            match weighted_line(&lx, &ll, &ones) {
                Some((slope, intercept)) if slope > 0.0 => {
                    let b = slope.clamp(0.5, 5.0);
                    let ln_t = if (b - slope).abs() > 0.0 {
                        lx.iter().zip(&ll).map(|(x, l)| x - l / b).sum::<f64>() / lx.len() as f64
                    } else {
                        -intercept / slope
                    };
                    (amp, ln_t.exp(), b)
                }
                _ => (amp, fallback_t, fallback_beta),
            }
        }
    }
}

/// Fits `A·exp(-t/T) + C`; `offset` frozen or free.
pub fn fit_exponential_decay(t: &[f64], y: &[f64], sigmas: Option<&[f64]>, offset: FloorMode) -> Result<FitResult> {
    check_xy(t, y, 3)?;
    if t.iter().any(|t| *t < 0.0) {
        return invalid("times must be non-negative");
    }
    let (lo, hi) = min_max(y);
    let c0 = match offset {
        FloorMode::Fixed(c) => c,
        FloorMode::Free => lo - 0.01 * (hi - lo).max(lo.abs() * 1e-6),
    };
    let (mut lt, mut ly, mut lw) = (Vec::new(), Vec::new(), Vec::new());
    for (&ti, &yi) in t.iter().zip(y) {
        let z = yi - c0;
        if z > 0.0 {
            lt.push(ti);
            ly.push(z.ln());
            lw.push(z * z);
        }
    }
    let span = min_max(t);
    let (a0, tau0) = match weighted_line(&lt, &ly, &lw) {
        Some((slope, intercept)) if slope < 0.0 => (intercept.exp(), -1.0 / slope),
        _ => (hi - c0, 0.5 * (span.1 - span.0).max(f64::MIN_POSITIVE)),
    };
    let free = [true, true, matches!(offset, FloorMode::Free)];
    let p0 = [a0, tau0, c0];
    let r = run(&ExponentialDecay, t, y, sigmas, &p0, &free)?;
    Ok(build_result(
        "exponential",
        &ExponentialDecay,
        &["counts", "s", "counts"],
        &free,
        t.len(),
        &r,
    ))
}

/// Fits `V0·exp[-2(x/T2)^β] + F` to variance data versus total delay `x`.
pub fn fit_stretched_variance_decay(
    two_tau: &[f64],
    var: &[f64],
    beta: BetaMode,
    floor: FloorMode,
    sigmas: Option<&[f64]>,
) -> Result<FitResult> {
    check_xy(two_tau, var, 4)?;
    check_modes(beta, two_tau)?;
    let (lo, hi) = min_max(var);
    let f0 = match floor {
        FloorMode::Fixed(f) => f,
        FloorMode::Free => lo - 0.01 * (hi - lo),
    };
    let (v0, t0, b0) = stretched_start(two_tau, var, f0, 2.0, beta);
    let free = [true, true, beta == BetaMode::Free, floor == FloorMode::Free];
    let model = StretchedVarianceDecay;
    let r = run(&model, two_tau, var, sigmas, &[v0, t0, b0, f0], &free)?;
    let mut out = build_result(
        "stretched_variance",
        &model,
        &["counts^2", "s", "", "counts^2"],
        &free,
        two_tau.len(),
        &r,
    );
    out.derived.push(linewidth(r.params[1], r.sigma(1))?);
    Ok(out)
}

/// Fits `a + b·exp[-(x/T2)^β]` to fixed-phase mean data versus total delay `x`.
pub fn fit_stretched_mean_decay(
    two_tau: &[f64],
    mean: &[f64],
    beta: BetaMode,
    sigmas: Option<&[f64]>,
) -> Result<FitResult> {
    check_xy(two_tau, mean, 4)?;
    check_modes(beta, two_tau)?;
    let (lo, hi) = min_max(mean);
    let a0 = lo - 0.01 * (hi - lo);
    let (b0, t0, beta0) = stretched_start(two_tau, mean, a0, 1.0, beta);
    let free = [true, true, true, beta == BetaMode::Free];
    let model = StretchedMeanDecay;
    let r = run(&model, two_tau, mean, sigmas, &[a0, b0, t0, beta0], &free)?;
    let mut out = build_result(
        "stretched_mean",
        &model,
        &["counts", "counts", "s", ""],
        &free,
        two_tau.len(),
        &r,
    );
    out.derived.push(linewidth(r.params[2], r.sigma(2))?);
    Ok(out)
}

/// Fits `C + A·cos(φ - φ0)` and reports the peak-to-peak contrast `2A/C`.
/// The amplitude is reported non-negative and `φ0` in (-π, π].
pub fn fit_cosine_fringe(phi: &[f64], m: &[f64], sigmas: Option<&[f64]>) -> Result<FitResult> {
    check_xy(phi, m, 4)?;
    let (plo, phi_hi) = min_max(phi);
    if !(phi_hi - plo > PI) {
        return invalid("phases must span more than pi");
    }
    // first harmonic of the data
    let n = phi.len() as f64;
    let c0 = m.iter().sum::<f64>() / n;
    let re = 2.0 / n * phi.iter().zip(m).map(|(p, y)| (y - c0) * p.cos()).sum::<f64>();
    let im = 2.0 / n * phi.iter().zip(m).map(|(p, y)| (y - c0) * p.sin()).sum::<f64>();
    let p0 = [c0, re.hypot(im), im.atan2(re)];
    let free = [true, true, true];
    let r = run(&CosineFringe, phi, m, sigmas, &p0, &free)?;
    let mut out = build_result(
        "cosine",
        &CosineFringe,
        &["counts", "counts", "rad"],
        &free,
        phi.len(),
        &r,
    );

    let (c, a) = (r.params[0], r.params[1]);
    let contrast = 2.0 * a.abs() / c;
    let (dc, da) = (-2.0 * a / (c * c), 2.0 / c);
    let cov = &r.covariance;
    let var = da * da * cov[(1, 1)] + dc * dc * cov[(0, 0)] + 2.0 * da * dc * cov[(0, 1)];
    if a < 0.0 {
        out.params[1].value = -a;
        out.params[2].value += PI;
    }
    out.params[2].value = wrap_pi(out.params[2].value);
    out.derived.push(FitParam {
        name: "contrast".into(),
        value: contrast,
        sigma: var.max(0.0).sqrt(),
        unit: String::new(),
        free: false,
    });
    Ok(out)
}

fn linewidth(t2: f64, sigma_t2: f64) -> Result<FitParam> {
    let g = homogeneous_linewidth(t2)?;
    Ok(FitParam {
        name: "gamma_h".into(),
        value: g,
        sigma: g * sigma_t2 / t2,
        unit: "Hz".into(),
        free: false,
    })
}

fn check_modes(beta: BetaMode, x: &[f64]) -> Result<()> {
    if let BetaMode::Fixed(b) = beta {
        if !(b > 0.0 && b.is_finite()) {
            return invalid("fixed beta must be finite and > 0");
        }
    }
    if x.iter().any(|x| *x < 0.0) {
        return invalid("delays must be non-negative");
    }
    Ok(())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Wraps an angle into (-π, π].
pub fn wrap_pi(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}
