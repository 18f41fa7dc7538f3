//! Figure presets and the measured constants they are built from.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::bloch::{Phase, SequenceSpec};
use crate::echo_model::{EnsembleParams, LaserParams, SensitivityParams};
use crate::error::{Error, Result};
use crate::montecarlo::{DetectorParams, LifetimeConfig, PhaseMode, PhysicsPath, RunConfig};

/// Measured values of the Er:Y2SiO5 experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConstants {
    pub n_emitters: u64,
    pub t2: f64,
    pub beta: f64,
    pub k: f64,
    pub t2_laser: f64,
    pub t1: f64,
    pub a_sp: f64,
    pub tau_echo: f64,
    pub shots_per_delay: usize,
    /// Shots kept per delay after outlier rejection.
    pub kept_shots: u64,
    pub outlier_threshold: f64,
    pub outlier_prob: f64,
    pub gate_delay: f64,
    pub gate_width: f64,
    pub fringe_two_tau: f64,
    pub fringe_shots: usize,
    pub repetition_rate: f64,
    /// Additive noise of the idealized histograms, as a fraction of N.
    pub normalized_noise: f64,
}

pub const REFERENCE: ReferenceConstants = ReferenceConstants {
    n_emitters: 2500,
    t2: 37e-6,
    beta: 2.0,
    k: 0.04,
    t2_laser: 15e-6,
    t1: 11e-3,
    a_sp: 27.0,
    tau_echo: 800e-9,
    shots_per_delay: 2000,
    kept_shots: 1800,
    outlier_threshold: 5.0,
    outlier_prob: 0.1,
    gate_delay: 3e-3,
    gate_width: 40e-3,
    fringe_two_tau: 1.6e-6,
    fringe_shots: 1000,
    repetition_rate: 10.0,
    normalized_noise: 0.01,
};

/// Multiplier applied to corrupted shots in the replica experiments.
pub const OUTLIER_SCALE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1b,
    Fig1d,
    Fig1ef,
    Fig2a,
    Fig3a,
    Fig3b,
    Fig3c,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Fig1b,
        Preset::Fig1d,
        Preset::Fig1ef,
        Preset::Fig2a,
        Preset::Fig3a,
        Preset::Fig3b,
        Preset::Fig3c,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1b => "fig1b",
            Preset::Fig1d => "fig1d",
            Preset::Fig1ef => "fig1ef",
            Preset::Fig2a => "fig2a",
            Preset::Fig3a => "fig3a",
            Preset::Fig3b => "fig3b",
            Preset::Fig3c => "fig3c",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            Error::InvalidArgument(format!("unknown preset `{s}`; valid presets: {}", names.join(", ")))
        })
    }
}

fn reference_ensemble() -> EnsembleParams {
    EnsembleParams {
        n_emitters: REFERENCE.n_emitters,
        t2: REFERENCE.t2,
        beta: REFERENCE.beta,
        t1: REFERENCE.t1,
        a_sp: REFERENCE.a_sp,
        k: REFERENCE.k,
    }
}

/// Canonical echo with τ left unbound; the run binds it per delay.
fn echo_sequence(mode: PhaseMode) -> SequenceSpec {
    let mut seq = match mode {
        PhaseMode::Random => SequenceSpec::canonical_echo(0.0, Phase::Random, Phase::Random),
        PhaseMode::Fixed { psi, phi } => SequenceSpec::canonical_echo(0.0, Phase::fixed(psi), Phase::fixed(phi)),
    };
    seq.tau = None;
    seq
}

/// Photon-counting detector of the replica experiments. `N` is taken as the
/// number of emitters seen through the gate, one count per excited emitter,
/// so the mean signal is N/2 as in the sensitivity model.
pub fn reference_detector(outlier_prob: f64) -> DetectorParams {
    DetectorParams {
        efficiency: 1.0,
        gauss_sigma: 0.0,
        dark_mean: 0.0,
        gate_delay: 0.0,
        gate_width: f64::INFINITY,
        outlier_prob,
        outlier_scale: OUTLIER_SCALE,
        shot_noise: true,
    }
}

/// Idealized echo simulation: unit contrast, exponential decay, no photon noise
/// and Gaussian noise of `REFERENCE.normalized_noise · N` counts.
fn idealized(mode: PhaseMode, delays: Vec<f64>, n_shots: usize, seed: u64, noise: bool) -> RunConfig {
    let ensemble = EnsembleParams {
        beta: 1.0,
        k: 1.0,
        ..reference_ensemble()
    };
    let mut detector = DetectorParams::ideal();
    if noise {
        detector.gauss_sigma = REFERENCE.normalized_noise * ensemble.n_emitters as f64;
    }
    RunConfig {
        ensemble,
        laser: LaserParams {
            t2_laser: f64::INFINITY,
        },
        detector,
        sequence: echo_sequence(mode),
        phase_mode: mode,
        physics_path: PhysicsPath::Analytic,
        n_shots,
        seed,
        delays,
        repetition_rate: REFERENCE.repetition_rate,
    }
}

const XYX: PhaseMode = PhaseMode::Fixed {
    psi: FRAC_PI_2,
    phi: 0.0,
};

/// Evolution times of the histogram presets: 0, T2 and 3·T2.
pub fn histogram_delays() -> Vec<f64> {
    vec![0.0, REFERENCE.t2, 3.0 * REFERENCE.t2]
}

pub fn fig1b_config(seed: u64) -> RunConfig {
    idealized(XYX, histogram_delays(), 20_000, seed, true)
}

pub fn fig1d_config(seed: u64) -> RunConfig {
    idealized(PhaseMode::Random, histogram_delays(), 20_000, seed, true)
}

/// Shared 2τ axis of the mean/variance decay comparison: 0 to 4·T2.
pub fn fig1ef_delays() -> Vec<f64> {
    (0..41).map(|i| 4.0 * REFERENCE.t2 * i as f64 / 40.0).collect()
}

/// Fixed- and random-phase configurations of the mean/variance comparison.
pub fn fig1ef_configs(seed: u64) -> (RunConfig, RunConfig) {
    (
        idealized(XYX, fig1ef_delays(), 2, seed, false),
        idealized(
            PhaseMode::Random,
            fig1ef_delays(),
            REFERENCE.shots_per_delay,
            seed,
            false,
        ),
    )
}

/// Fluorescence decay histogram after a single excitation pulse.
pub fn fig2a_config(seed: u64) -> LifetimeConfig {
    LifetimeConfig {
        n_emitters: REFERENCE.n_emitters,
        excited_fraction: 0.5,
        t1: REFERENCE.t1,
        efficiency: 0.02,
        dark_rate: 50.0,
        bin_width: 0.5e-3,
        n_bins: 100,
        n_shots: 4000,
        seed,
    }
}

/// Last-pulse phases of the fringe scan.
pub fn fig3a_phases() -> Vec<f64> {
    (0..16).map(|i| 2.0 * PI * i as f64 / 16.0).collect()
}

/// Fixed-phase fringe at short delay. Laser noise is left out because the
/// measured contrast factor already contains it at this delay.
pub fn fig3a_config(seed: u64) -> RunConfig {
    RunConfig {
        ensemble: reference_ensemble(),
        laser: LaserParams {
            t2_laser: f64::INFINITY,
        },
        detector: reference_detector(0.0),
        sequence: echo_sequence(XYX),
        phase_mode: XYX,
        physics_path: PhysicsPath::Analytic,
        n_shots: REFERENCE.fringe_shots,
        seed,
        delays: vec![REFERENCE.fringe_two_tau],
        repetition_rate: REFERENCE.repetition_rate,
    }
}

pub fn fig3b_delays() -> Vec<f64> {
    (0..21).map(|i| 80e-6 * i as f64 / 20.0).collect()
}

/// Random-phase decay with the measured parameters and corrupted shots.
pub fn fig3b_config(seed: u64) -> RunConfig {
    RunConfig {
        ensemble: reference_ensemble(),
        laser: LaserParams {
            t2_laser: REFERENCE.t2_laser,
        },
        detector: reference_detector(REFERENCE.outlier_prob),
        sequence: echo_sequence(PhaseMode::Random),
        phase_mode: PhaseMode::Random,
        physics_path: PhysicsPath::Analytic,
        n_shots: REFERENCE.shots_per_delay,
        seed,
        delays: fig3b_delays(),
        repetition_rate: REFERENCE.repetition_rate,
    }
}

pub fn reference_sensitivity() -> SensitivityParams {
    SensitivityParams {
        k: REFERENCE.k,
        n_shots: REFERENCE.kept_shots,
        tau_echo: REFERENCE.tau_echo,
        a_sp: REFERENCE.a_sp,
    }
}

/// Shot-decay configuration of a preset, for presets built on the decay experiment.
pub fn decay_config(preset: Preset, seed: u64) -> Result<RunConfig> {
    match preset {
        Preset::Fig1b => Ok(fig1b_config(seed)),
        Preset::Fig1d => Ok(fig1d_config(seed)),
        Preset::Fig1ef => Ok(fig1ef_configs(seed).1),
        Preset::Fig3b => Ok(fig3b_config(seed)),
        other => Err(Error::InvalidArgument(format!(
            "preset `{other}` is not a decay simulation; use fig1b, fig1d, fig1ef or fig3b"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_the_experiment() {
        let r = REFERENCE;
        assert_eq!(r.n_emitters, 2500);
        assert_eq!((r.t2, r.beta, r.k), (37e-6, 2.0, 0.04));
        assert_eq!((r.t2_laser, r.t1, r.a_sp, r.tau_echo), (15e-6, 11e-3, 27.0, 800e-9));
        assert_eq!(
            (r.shots_per_delay, r.kept_shots, r.outlier_threshold),
            (2000, 1800, 5.0)
        );
        assert_eq!((r.gate_delay, r.gate_width), (3e-3, 40e-3));
        assert_eq!(
            (r.fringe_two_tau, r.fringe_shots, r.repetition_rate),
            (1.6e-6, 1000, 10.0)
        );
    }

    #[test]
    fn presets_read_the_table() {
        let c = fig3b_config(1);
        assert_eq!(c.ensemble, reference_ensemble());
        assert_eq!(c.n_shots, REFERENCE.shots_per_delay);
        assert_eq!(c.detector.efficiency, 1.0);
        let s = reference_sensitivity();
        assert_eq!((s.k, s.n_shots), (REFERENCE.k, REFERENCE.kept_shots));
        assert_eq!(fig3a_config(1).delays, vec![REFERENCE.fringe_two_tau]);
    }

    #[test]
    fn all_presets_are_valid() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            if let Ok(c) = decay_config(p, 3) {
                c.validate().unwrap();
            }
        }
        fig3a_config(0).validate().unwrap();
        fig1ef_configs(0).0.validate().unwrap();
    }

    #[test]
    fn unknown_preset_lists_names() {
        let err = "fig9".parse::<Preset>().unwrap_err().to_string();
        assert!(err.contains("fig1b") && err.contains("fig3c"));
    }
}
