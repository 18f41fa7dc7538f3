//! End-to-end simulation → statistics → fit chains behind the commands and presets.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::str::FromStr;

use crate::analysis::robust::plain_moments;
use crate::analysis::sensitivity::log_grid;
use crate::analysis::{
    build_histogram, fit_cosine_fringe, fit_exponential_decay, fit_stretched_mean_decay, fit_stretched_variance_decay,
    robust_filter, sensitivity_table, variance_point_sigmas, BetaMode, FitResult, FloorMode, Histogram,
    SensitivityTable,
};
use crate::echo_model::{min_detectable_emitters, EnsembleParams, LaserParams, SensitivityParams};
use crate::error::{Error, Result};
use crate::montecarlo::rng::derive_seed;
use crate::montecarlo::{
    run_decay_experiment, run_fringe_experiment, run_lifetime_experiment, DecayDataset, DetectorParams, PhaseMode,
    RunConfig,
};

use super::io::{Curve, DecayRow, ShotTable};
use super::presets::{
    fig1ef_configs, fig2a_config, fig3a_config, fig3a_phases, fig3b_config, reference_sensitivity, REFERENCE,
};

pub const DEFAULT_BINS: usize = 50;

pub fn shot_table(ds: &DecayDataset) -> ShotTable {
    ShotTable {
        delay_us: ds.delays.iter().map(|d| d * 1e6).collect(),
        shots: ds.shots.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayAnalysis {
    pub rows: Vec<DecayRow>,
    /// Histogram of the kept shots at each delay.
    pub histograms: Vec<Histogram>,
}

/// Outlier-rejected moments and histograms per delay.
pub fn analyze_shots(table: &ShotTable, threshold: f64, n_bins: usize) -> Result<DecayAnalysis> {
    let mut rows = Vec::with_capacity(table.delay_us.len());
    let mut histograms = Vec::with_capacity(table.delay_us.len());
    for (&delay_us, shots) in table.delay_us.iter().zip(&table.shots) {
        let (m, kept) = robust_filter(shots, threshold)?;
        rows.push(DecayRow {
            delay_us,
            mean: m.mean,
            variance: m.variance,
            n_kept: m.n_kept,
            n_discarded: m.n_discarded,
        });
        histograms.push(build_histogram(&kept, n_bins, None)?);
    }
    Ok(DecayAnalysis { rows, histograms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// Stretched-exponential variance decay.
    Stretched,
    /// Stretched-exponential mean decay.
    StretchedMean,
    Exponential,
    Cosine,
}

impl FromStr for FitModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<FitModel> {
        match s {
            "stretched" => Ok(FitModel::Stretched),
            "stretched_mean" => Ok(FitModel::StretchedMean),
            "exponential" => Ok(FitModel::Exponential),
            "cosine" => Ok(FitModel::Cosine),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model `{s}`; valid models: stretched, stretched_mean, exponential, cosine"
            ))),
        }
    }
}

/// Parses `free` or a number.
pub fn parse_beta(s: &str) -> Result<BetaMode> {
    if s == "free" {
        return Ok(BetaMode::Free);
    }
    s.parse::<f64>()
        .ok()
        .filter(|b| *b > 0.0 && b.is_finite())
        .map(BetaMode::Fixed)
        .ok_or_else(|| Error::InvalidArgument(format!("beta must be `free` or a positive number, got `{s}`")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FloorChoice {
    /// Fixed at the photon shot-noise variance, the mean count.
    ShotNoise,
    Free,
    Fixed(f64),
}

impl FromStr for FloorChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<FloorChoice> {
        match s {
            "shot-noise" => Ok(FloorChoice::ShotNoise),
            "free" => Ok(FloorChoice::Free),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .map(FloorChoice::Fixed)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("floor must be shot-noise, free or a number, got `{s}`"))
                }),
        }
    }
}

/// Fits the per-delay moments; the variance models use the variance column
/// weighted by its sampling error, the mean model uses the mean column.
pub fn fit_decay_rows(rows: &[DecayRow], model: FitModel, beta: BetaMode, floor: FloorChoice) -> Result<FitResult> {
    let x: Vec<f64> = rows.iter().map(|r| r.delay_us * 1e-6).collect();
    let var: Vec<f64> = rows.iter().map(|r| r.variance).collect();
    let floor = match floor {
        FloorChoice::ShotNoise => FloorMode::Fixed(rows.iter().map(|r| r.mean).sum::<f64>() / rows.len().max(1) as f64),
        FloorChoice::Free => FloorMode::Free,
        FloorChoice::Fixed(f) => FloorMode::Fixed(f),
    };
    match model {
        FitModel::Stretched => {
            let n: Vec<usize> = rows.iter().map(|r| r.n_kept).collect();
            let sig = variance_point_sigmas(&var, &n)?;
            fit_stretched_variance_decay(&x, &var, beta, floor, Some(&sig))
        }
        FitModel::StretchedMean => {
            let mean: Vec<f64> = rows.iter().map(|r| r.mean).collect();
            let sig: Vec<f64> = rows.iter().map(|r| (r.variance / r.n_kept as f64).sqrt()).collect();
            let sig = sig.iter().all(|s| *s > 0.0).then_some(sig);
            fit_stretched_mean_decay(&x, &mean, beta, sig.as_deref())
        }
        FitModel::Exponential => {
            let n: Vec<usize> = rows.iter().map(|r| r.n_kept).collect();
            let sig = variance_point_sigmas(&var, &n)?;
            fit_exponential_decay(&x, &var, Some(&sig), floor)
        }
        FitModel::Cosine => Err(Error::InvalidArgument(
            "the cosine model needs a phase curve (x,y[,sigma]), not decay moments".into(),
        )),
    }
}

/// Fits a generic curve; `x` is in seconds (radians for the cosine model).
pub fn fit_curve(c: &Curve, model: FitModel, beta: BetaMode, floor: FloorChoice) -> Result<FitResult> {
    let floor = match floor {
        FloorChoice::ShotNoise => {
            return Err(Error::InvalidArgument(
                "a shot-noise floor needs decay moments; use --floor free or a value".into(),
            ))
        }
        FloorChoice::Free => FloorMode::Free,
        FloorChoice::Fixed(f) => FloorMode::Fixed(f),
    };
    let s = c.sigma.as_deref();
    match model {
        FitModel::Stretched => fit_stretched_variance_decay(&c.x, &c.y, beta, floor, s),
        FitModel::StretchedMean => fit_stretched_mean_decay(&c.x, &c.y, beta, s),
        FitModel::Exponential => fit_exponential_decay(&c.x, &c.y, s, floor),
        FitModel::Cosine => fit_cosine_fringe(&c.x, &c.y, s),
    }
}

/// Normalized intensity histograms (counts / N) on a shared axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedHistograms {
    pub two_tau: Vec<f64>,
    pub bin_centers: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn normalized_histograms(cfg: &RunConfig) -> Result<NormalizedHistograms> {
    let ds = run_decay_experiment(cfg)?;
    let n = cfg.ensemble.n_emitters as f64;
    let mut out = NormalizedHistograms {
        two_tau: ds.delays.clone(),
        bin_centers: Vec::new(),
        counts: Vec::new(),
        mean: Vec::new(),
        std: Vec::new(),
    };
    for shots in &ds.shots {
        let x: Vec<f64> = shots.iter().map(|c| c / n).collect();
        let h = build_histogram(&x, 120, Some((-0.1, 1.1)))?;
        let (m, v) = plain_moments(&x)?;
        out.bin_centers = h.centers();
        out.counts.push(h.bin_counts);
        out.mean.push(m);
        out.std.push(v.sqrt());
    }
    Ok(out)
}

/// Fixed-phase mean (÷N) and random-phase variance (÷N²) on a shared 2τ axis, each fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVarianceDecay {
    pub two_tau: Vec<f64>,
    pub mean_over_n: Vec<f64>,
    pub variance_over_n2: Vec<f64>,
    pub variance_sigma: Vec<f64>,
    pub mean_fit: FitResult,
    pub variance_fit: FitResult,
}

pub fn mean_variance_decay(seed: u64) -> Result<MeanVarianceDecay> {
    let (fixed, random) = fig1ef_configs(seed);
    let n = fixed.ensemble.n_emitters as f64;
    let fixed_ds = run_decay_experiment(&fixed)?;
    let random_ds = run_decay_experiment(&random)?;
    let mut mean_over_n = Vec::new();
    let mut variance_over_n2 = Vec::new();
    for (f, r) in fixed_ds.shots.iter().zip(&random_ds.shots) {
        mean_over_n.push(plain_moments(f)?.0 / n);
        variance_over_n2.push(plain_moments(r)?.1 / (n * n));
    }
    let counts = vec![random.n_shots; variance_over_n2.len()];
    let variance_sigma = variance_point_sigmas(&variance_over_n2, &counts)?;
    let beta = BetaMode::Fixed(fixed.ensemble.beta);
    let two_tau = fixed_ds.delays.clone();
    let mean_fit = fit_stretched_mean_decay(&two_tau, &mean_over_n, beta, None)?;
    let variance_fit = fit_stretched_variance_decay(
        &two_tau,
        &variance_over_n2,
        beta,
        FloorMode::Fixed(0.0),
        Some(&variance_sigma),
    )?;
    Ok(MeanVarianceDecay {
        two_tau,
        mean_over_n,
        variance_over_n2,
        variance_sigma,
        mean_fit,
        variance_fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeFit {
    pub t: Vec<f64>,
    pub counts: Vec<f64>,
    pub fit: FitResult,
}

pub fn lifetime_fit(seed: u64) -> Result<LifetimeFit> {
    let ds = run_lifetime_experiment(&fig2a_config(seed))?;
    // only bins after the detector gate opens enter the fit
    let (t, y): (Vec<f64>, Vec<f64>) =
        ds.t.iter()
            .zip(&ds.counts)
            .filter(|(t, _)| **t >= REFERENCE.gate_delay)
            .map(|(t, c)| (*t, *c))
            .unzip();
    let sig: Vec<f64> = y.iter().map(|c| c.max(1.0).sqrt()).collect();
    let fit = fit_exponential_decay(&t, &y, Some(&sig), FloorMode::Free)?;
    Ok(LifetimeFit {
        t: ds.t,
        counts: ds.counts,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fringe {
    pub phi: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub fit: FitResult,
}

pub fn fringe_fit(cfg: &RunConfig, phases: &[f64], two_tau: f64) -> Result<Fringe> {
    let ds = run_fringe_experiment(cfg, phases, two_tau)?;
    // a noiseless point (e.g. zero population) leaves no usable weights
    let weighted = ds.std_error.iter().all(|s| *s > 0.0);
    let fit = fit_cosine_fringe(&ds.phi, &ds.mean, weighted.then_some(ds.std_error.as_slice()))?;
    Ok(Fringe {
        phi: ds.phi,
        mean: ds.mean,
        std_error: ds.std_error,
        fit,
    })
}

pub fn reference_fringe(seed: u64) -> Result<Fringe> {
    fringe_fit(&fig3a_config(seed), &fig3a_phases(), REFERENCE.fringe_two_tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecay {
    pub analysis: DecayAnalysis,
    pub fit: FitResult,
}

/// Random-phase decay with outliers, 5σ rejection and a β = 2 fit.
pub fn reference_variance_decay(seed: u64) -> Result<VarianceDecay> {
    let ds = run_decay_experiment(&fig3b_config(seed))?;
    let analysis = analyze_shots(&shot_table(&ds), REFERENCE.outlier_threshold, DEFAULT_BINS)?;
    let fit = fit_decay_rows(
        &analysis.rows,
        FitModel::Stretched,
        BetaMode::Fixed(REFERENCE.beta),
        FloorChoice::ShotNoise,
    )?;
    Ok(VarianceDecay { analysis, fit })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub table: SensitivityTable,
    pub min_emitters: u64,
}

pub fn sensitivity(params: &SensitivityParams) -> Result<Sensitivity> {
    Ok(Sensitivity {
        table: sensitivity_table(params, &log_grid(10.0, 1e6, 121))?,
        min_emitters: min_detectable_emitters(params, 1.0)?,
    })
}

pub fn reference_sensitivity_table() -> Result<Sensitivity> {
    sensitivity(&reference_sensitivity())
}

/// Fixed-phase fringe contrast versus 2τ with laser phase diffusion only.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    pub two_tau: Vec<f64>,
    pub contrast: Vec<f64>,
    pub contrast_sigma: Vec<f64>,
    /// Single exponential in 2τ; its lifetime estimates the laser coherence time.
    pub fit: FitResult,
}

pub fn laser_contrast_scan(seed: u64, t2_laser: f64, n_shots: usize, two_tau: &[f64]) -> Result<LaserScan> {
    let phases: Vec<f64> = (0..8).map(|i| FRAC_PI_4 * i as f64).collect();
    let mode = PhaseMode::Fixed {
        psi: FRAC_PI_2,
        phi: 0.0,
    };
    let mut base = fig3a_config(seed);
    base.ensemble = EnsembleParams {
        // emitter coherence far longer than the laser's
        t2: 1.0,
        beta: 1.0,
        k: 1.0,
        ..base.ensemble
    };
    base.laser = LaserParams { t2_laser };
    base.detector = DetectorParams {
        shot_noise: true,
        ..DetectorParams::ideal()
    };
    base.phase_mode = mode;
    base.n_shots = n_shots;
    let mut contrast = Vec::new();
    let mut contrast_sigma = Vec::new();
    for (i, &t) in two_tau.iter().enumerate() {
        let cfg = RunConfig {
            seed: derive_seed(seed, i as u64),
            delays: vec![t],
            ..base.clone()
        };
        let f = fringe_fit(&cfg, &phases, t)?;
        contrast.push(f.fit.value("contrast"));
        contrast_sigma.push(f.fit.sigma("contrast"));
    }
    let fit = fit_exponential_decay(two_tau, &contrast, Some(&contrast_sigma), FloorMode::Fixed(0.0))?;
    Ok(LaserScan {
        two_tau: two_tau.to_vec(),
        contrast,
        contrast_sigma,
        fit,
    })
}
