//! Shot-by-shot simulation of fluorescence-detected echo experiments.
//!
//! A shot draws the pulse phases, adds laser phase diffusion, computes the
//! excited-state population through one of two physics paths and passes it
//! through the photon-counting detector. Each shot owns counter-keyed random
//! streams (see [`rng`]), so datasets are bit-identical for a given seed
//! regardless of thread count or evaluation order.

mod dephasing;
pub mod rng;

use std::f64::consts::{PI, TAU};

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::bloch::{free_evolve, rotate, BlochState, Element, Phase, SequenceSpec};
use crate::echo_model::{echo_coherence, gate_capture_fraction, EnsembleParams, LaserParams};
use crate::error::{invalid, Error, Result};

pub use dephasing::dephasing_kicks;
use rng::{Experiment, ShotRngFactory, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Detection efficiency in [0, 1].
    pub efficiency: f64,
    /// Additive Gaussian noise, in counts.
    pub gauss_sigma: f64,
    /// Mean dark counts per gate.
    pub dark_mean: f64,
    /// Gate opening delay after the last pulse (s).
    pub gate_delay: f64,
    /// Gate width (s); `f64::INFINITY` integrates the whole decay.
    pub gate_width: f64,
    /// Probability that a shot is corrupted.
    pub outlier_prob: f64,
    /// Multiplier applied to corrupted shots.
    pub outlier_scale: f64,
    /// Poisson photon statistics; when off, the signal and dark counts are their means.
    pub shot_noise: bool,
}

impl DetectorParams {
    /// Unit efficiency, full gate, no noise of any kind.
    pub fn ideal() -> Self {
        DetectorParams {
            efficiency: 1.0,
            gauss_sigma: 0.0,
            dark_mean: 0.0,
            gate_delay: 0.0,
            gate_width: f64::INFINITY,
            outlier_prob: 0.0,
            outlier_scale: 1.0,
            shot_noise: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return invalid(format!("efficiency must lie in [0, 1], got {}", self.efficiency));
        }
        if !(self.gauss_sigma >= 0.0 && self.gauss_sigma.is_finite()) {
            return invalid(format!("gauss_sigma must be >= 0, got {}", self.gauss_sigma));
        }
        if !(self.dark_mean >= 0.0 && self.dark_mean.is_finite()) {
            return invalid(format!("dark_mean must be >= 0, got {}", self.dark_mean));
        }
        if !(self.gate_delay >= 0.0 && self.gate_delay.is_finite()) || !(self.gate_width >= 0.0) {
            return invalid("gate delay and width must be >= 0");
        }
        if !(0.0..1.0).contains(&self.outlier_prob) {
            return invalid(format!("outlier_prob must lie in [0, 1), got {}", self.outlier_prob));
        }
        if self.outlier_prob > 0.0 && !(self.outlier_scale > 5.0 && self.outlier_scale.is_finite()) {
            return invalid(format!(
                "outlier_scale must be > 5 when outliers are enabled, got {}",
                self.outlier_scale
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseMode {
    /// Second (ψ) and third (φ) pulse phases fixed relative to the first pulse.
    Fixed { psi: f64, phi: f64 },
    /// ψ and φ drawn uniformly on [0, 2π) for every shot.
    Random,
}

impl PhaseMode {
    /// Reads the phase mode off the second and third pulses of a canonical echo.
    pub fn from_sequence(seq: &SequenceSpec) -> Result<PhaseMode> {
        let first = match seq.pulses().next().map(|p| p.phase) {
            Some(Phase::Fixed(p)) => p,
            _ => return Err(Error::InvalidState("first pulse must have a fixed phase".into())),
        };
        match seq.echo_phases()? {
            (Phase::Random, Phase::Random) => Ok(PhaseMode::Random),
            (Phase::Fixed(psi), Phase::Fixed(phi)) => Ok(PhaseMode::Fixed {
                psi: psi - first,
                phi: phi - first,
            }),
            _ => Err(Error::InvalidState(
                "second and third pulses must both be random or both fixed".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhysicsPath {
    /// Closed-form excited population, contrast set by `k`.
    Analytic,
    /// Explicit Bloch propagation of an inhomogeneous sub-ensemble.
    Ensemble {
        n_detunings: usize,
        /// Standard deviation of the static detuning (rad/s).
        detuning_sigma: f64,
        /// Relative standard deviation of the pulse area.
        rabi_spread: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ensemble: EnsembleParams,
    pub laser: LaserParams,
    pub detector: DetectorParams,
    pub sequence: SequenceSpec,
    pub phase_mode: PhaseMode,
    pub physics_path: PhysicsPath,
    pub n_shots: usize,
    pub seed: u64,
    /// Total evolution times 2τ (s).
    pub delays: Vec<f64>,
    /// Shot repetition rate (Hz). Carried as metadata only.
    pub repetition_rate: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.laser.validate()?;
        self.detector.validate()?;
        if !self.sequence.is_canonical_echo() {
            return invalid("sequence must be a three-pulse echo with two equal delays");
        }
        if self.n_shots < 2 {
            return invalid(format!("n_shots must be >= 2, got {}", self.n_shots));
        }
        if self.n_shots > u32::MAX as usize {
            return invalid("n_shots exceeds the addressable range");
        }
        if self.delays.is_empty() {
            return invalid("delays must not be empty");
        }
        if let Some(d) = self.delays.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return invalid(format!("delays must be finite and >= 0, got {d}"));
        }
        if let PhysicsPath::Ensemble {
            n_detunings,
            detuning_sigma,
            rabi_spread,
        } = self.physics_path
        {
            if n_detunings == 0 {
                return invalid("n_detunings must be > 0");
            }
            if n_detunings < 100 {
                warn!("n_detunings = {n_detunings} gives poor self-averaging");
            }
            if !(detuning_sigma >= 0.0 && detuning_sigma.is_finite()) {
                return invalid("detuning_sigma must be >= 0");
            }
            if !(rabi_spread >= 0.0 && rabi_spread.is_finite()) {
                return invalid("rabi_spread must be >= 0");
            }
        }
        Ok(())
    }

    /// Mean detected counts per emitter in the excited state.
    pub fn counts_per_excited_emitter(&self) -> Result<f64> {
        let gate = gate_capture_fraction(self.detector.gate_delay, self.detector.gate_width, self.ensemble.t1)?;
        Ok(self.detector.efficiency * gate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayDataset {
    /// Total evolution times 2τ (s).
    pub delays: Vec<f64>,
    /// `shots[i][j]`: integrated counts of shot `j` at delay `i`.
    pub shots: Vec<Vec<f64>>,
    pub meta: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeDataset {
    pub two_tau: f64,
    pub phi: Vec<f64>,
    /// Mean counts per phase point.
    pub mean: Vec<f64>,
    /// Standard error of each mean.
    pub std_error: Vec<f64>,
    pub n_shots: usize,
}

/// Draws `(ψ, φ)` for one shot.
pub fn sample_pulse_phases<R: Rng + ?Sized>(mode: &PhaseMode, rng: &mut R) -> (f64, f64) {
    match *mode {
        PhaseMode::Fixed { psi, phi } => (psi, phi),
        PhaseMode::Random => (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)),
    }
}

/// Laser phase offsets `(δψ, δφ) = (δ₁, δ₁ + δ₂)` accrued over the two
/// free-evolution intervals of length `tau`, with `δ₁, δ₂ ~ N(0, 2τ/T2,laser)`.
pub fn sample_laser_phase_offsets<R: Rng + ?Sized>(tau: f64, laser: &LaserParams, rng: &mut R) -> (f64, f64) {
    if tau <= 0.0 || laser.t2_laser.is_infinite() {
        return (0.0, 0.0);
    }
    let sd = (2.0 * tau / laser.t2_laser).sqrt();
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    let d1 = normal.sample(rng);
    let d2 = normal.sample(rng);
    (d1, d1 + d2)
}

/// Closed-form excited population `[1 + k·exp(-(2τ/T2)^β)·cos(π - 2ψ + φ)]/2`.
pub fn excited_population_analytic(cfg: &RunConfig, two_tau: f64, psi: f64, phi: f64) -> Result<f64> {
    let e = &cfg.ensemble;
    let c = echo_coherence(two_tau, e.t2, e.beta)?;
    Ok(((1.0 + e.k * c * (PI - 2.0 * psi + phi).cos()) / 2.0).clamp(0.0, 1.0))
}

/// Excited population averaged over an explicitly propagated sub-ensemble.
///
/// Each emitter gets a static Gaussian detuning and a pulse-area scale drawn
/// from a Gaussian of mean 1 truncated at zero. The coherence decay is applied
/// as a per-emitter phase kick before the last pulse (see [`dephasing_kicks`]).
/// `k` plays no role here: contrast emerges from the area spread.
pub fn excited_population_ensemble<R: Rng + ?Sized>(
    cfg: &RunConfig,
    two_tau: f64,
    psi: f64,
    phi: f64,
    rng: &mut R,
) -> Result<f64> {
    let PhysicsPath::Ensemble {
        n_detunings,
        detuning_sigma,
        rabi_spread,
    } = cfg.physics_path
    else {
        return Err(Error::InvalidState("physics path is not ENSEMBLE".into()));
    };
    if n_detunings == 0 {
        return invalid("n_detunings must be > 0");
    }
    let tau = two_tau / 2.0;
    let seq = cfg.sequence.resolve_echo(tau, psi, phi)?;
    let last_delay = seq
        .elements
        .iter()
        .rposition(|e| matches!(e, Element::Delay(_)))
        .expect("canonical echo has delays");

    let detuning = Normal::new(0.0, detuning_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let area_scale = Normal::new(1.0, rabi_spread).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let kicks = dephasing_kicks(n_detunings, two_tau, cfg.ensemble.t2, cfg.ensemble.beta, rng);
    let t1 = cfg.ensemble.t1;

    let mut total = 0.0;
    for kick in kicks {
        let det = if detuning_sigma > 0.0 {
            detuning.sample(rng)
        } else {
            0.0
        };
        let scale = if rabi_spread > 0.0 {
            truncated_positive(&area_scale, rng)
        } else {
            1.0
        };
        let mut state = BlochState::GROUND;
        for (i, element) in seq.elements.iter().enumerate() {
            state = match element {
                Element::Pulse(p) => {
                    let phase = p.phase.value().expect("resolved phases are fixed");
                    rotate(state, p.area * scale, phase)?
                }
                Element::Delay(d) => {
                    let s = free_evolve(state, det, seq.delay_duration(d)?, f64::INFINITY, t1)?;
                    if i == last_delay {
                        s.precess(kick)
                    } else {
                        s
                    }
                }
            };
        }
        total += state.excited_population();
    }
    Ok((total / n_detunings as f64).clamp(0.0, 1.0))
}

fn truncated_positive<R: Rng + ?Sized>(dist: &Normal<f64>, rng: &mut R) -> f64 {
    for _ in 0..1000 {
        let x = dist.sample(rng);
        if x >= 0.0 {
            return x;
        }
    }
    0.0
}

/// Integrated counts for one shot with excited population `p_e`.
///
/// Poisson signal (mean `N·p_e·efficiency·gate`) plus Poisson dark counts plus
/// Gaussian noise; a corrupted shot is then multiplied by `outlier_scale`.
pub fn detect<R: Rng + ?Sized>(p_e: f64, cfg: &RunConfig, rng: &mut R) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_e) {
        return invalid(format!("p_e must lie in [0, 1], got {p_e}"));
    }
    let d = &cfg.detector;
    let mu = cfg.ensemble.n_emitters as f64 * p_e * cfg.counts_per_excited_emitter()?;
    let mut counts = if d.shot_noise {
        poisson(mu, rng) + poisson(d.dark_mean, rng)
    } else {
        mu + d.dark_mean
    };
    if d.gauss_sigma > 0.0 {
        counts += d.gauss_sigma * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    if d.outlier_prob > 0.0 && rng.random::<f64>() < d.outlier_prob {
        counts *= d.outlier_scale;
    }
    Ok(counts)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng)
}

fn simulate_shot(
    cfg: &RunConfig,
    factory: &ShotRngFactory,
    block: u32,
    shot: u32,
    two_tau: f64,
    mode: &PhaseMode,
) -> Result<f64> {
    let (psi, phi) = sample_pulse_phases(mode, &mut factory.rng(block, shot, Stream::Phases));
    let (d_psi, d_phi) =
        sample_laser_phase_offsets(two_tau / 2.0, &cfg.laser, &mut factory.rng(block, shot, Stream::Laser));
    let (psi, phi) = (psi + d_psi, phi + d_phi);
    let p_e = match cfg.physics_path {
        PhysicsPath::Analytic => excited_population_analytic(cfg, two_tau, psi, phi)?,
        PhysicsPath::Ensemble { .. } => {
            excited_population_ensemble(cfg, two_tau, psi, phi, &mut factory.rng(block, shot, Stream::Physics))?
        }
    };
    detect(p_e, cfg, &mut factory.rng(block, shot, Stream::Detector))
}

/// Runs `n_shots` shots at every configured delay.
pub fn run_decay_experiment(cfg: &RunConfig) -> Result<DecayDataset> {
    cfg.validate()?;
    let factory = ShotRngFactory::new(cfg.seed, Experiment::Decay);
    let shots = cfg
        .delays
        .iter()
        .enumerate()
        .map(|(i, &two_tau)| {
            (0..cfg.n_shots as u32)
                .into_par_iter()
                .map(|j| simulate_shot(cfg, &factory, i as u32, j, two_tau, &cfg.phase_mode))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayDataset {
        delays: cfg.delays.clone(),
        shots,
        meta: cfg.clone(),
    })
}

/// Sweeps the last-pulse phase φ at fixed ψ and returns the mean counts per φ.
pub fn run_fringe_experiment(cfg: &RunConfig, phi_values: &[f64], two_tau: f64) -> Result<FringeDataset> {
    cfg.validate()?;
    let PhaseMode::Fixed { psi, .. } = cfg.phase_mode else {
        return Err(Error::InvalidState("fringe experiments need fixed phases".into()));
    };
    if !(two_tau >= 0.0 && two_tau.is_finite()) {
        return invalid(format!("two_tau must be >= 0, got {two_tau}"));
    }
    let factory = ShotRngFactory::new(cfg.seed, Experiment::Fringe);
    let n = cfg.n_shots as f64;
    let mut mean = Vec::with_capacity(phi_values.len());
    let mut std_error = Vec::with_capacity(phi_values.len());
    for (i, &phi) in phi_values.iter().enumerate() {
        let mode = PhaseMode::Fixed { psi, phi };
        let counts = (0..cfg.n_shots as u32)
            .into_par_iter()
            .map(|j| simulate_shot(cfg, &factory, i as u32, j, two_tau, &mode))
            .collect::<Result<Vec<f64>>>()?;
        let m = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean.push(m);
        std_error.push((var / n).sqrt());
    }
    Ok(FringeDataset {
        two_tau,
        phi: phi_values.to_vec(),
        mean,
        std_error,
        n_shots: cfg.n_shots,
    })
}

/// Time-resolved fluorescence after a population-creating pulse, accumulated over shots.
#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeConfig {
    pub n_emitters: u64,
    /// Excited fraction after the pulse.
    pub excited_fraction: f64,
    pub t1: f64,
    pub efficiency: f64,
    /// Dark count rate (1/s).
    pub dark_rate: f64,
    /// Histogram bin width (s).
    pub bin_width: f64,
    pub n_bins: usize,
    pub n_shots: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifetimeDataset {
    /// Left edge of each time bin (s).
    pub t: Vec<f64>,
    pub counts: Vec<f64>,
}

/// Poisson-noised fluorescence decay histogram.
pub fn run_lifetime_experiment(cfg: &LifetimeConfig) -> Result<LifetimeDataset> {
    if !(cfg.t1 > 0.0 && cfg.bin_width > 0.0) || cfg.n_bins == 0 {
        return invalid("lifetime experiment needs T1 > 0, bin_width > 0 and at least one bin");
    }
    if !(0.0..=1.0).contains(&cfg.excited_fraction) || !(0.0..=1.0).contains(&cfg.efficiency) {
        return invalid("excited_fraction and efficiency must lie in [0, 1]");
    }
    if !(cfg.dark_rate >= 0.0) {
        return invalid("dark_rate must be >= 0");
    }
    let factory = ShotRngFactory::new(cfg.seed, Experiment::Lifetime);
    let amplitude = cfg.n_emitters as f64 * cfg.excited_fraction * cfg.efficiency * cfg.n_shots as f64;
    let (t, counts) = (0..cfg.n_bins)
        .map(|i| {
            let t0 = i as f64 * cfg.bin_width;
            let t1 = t0 + cfg.bin_width;
            let expected = amplitude * ((-t0 / cfg.t1).exp() - (-t1 / cfg.t1).exp())
                + cfg.dark_rate * cfg.bin_width * cfg.n_shots as f64;
            let mut rng = factory.rng(i as u32, 0, Stream::Detector);
            (t0, poisson(expected, &mut rng))
        })
        .unzip();
    Ok(LifetimeDataset { t, counts })
}
