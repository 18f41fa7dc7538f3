//! Two-level emitter kinematics on the Bloch sphere.
//!
//! Conventions used throughout the crate:
//!
//! - `w = -1` is the ground state, `w = +1` the excited state.
//! - A pulse of phase `p` rotates about the equatorial axis `(cos p, sin p, 0)`
//!   following the right-hand rule; phase 0 is the X axis, π/2 the Y axis.
//! - A positive detuning precesses the coherence from `u` towards `v`.
//! - Pulses are instantaneous rotations; relaxation only acts during delays.

mod sequence;

pub use sequence::{parse_sequence, Delay, Element, Phase, Pulse, SequenceSpec};

use crate::error::{invalid, Error, Result};

/// Tolerance on the Bloch-ball constraint `|r|² ≤ 1`.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    /// In-phase coherence.
    pub u: f64,
    /// Quadrature coherence.
    pub v: f64,
    /// Population inversion.
    pub w: f64,
}

impl BlochState {
    pub const GROUND: BlochState = BlochState {
        u: 0.0,
        v: 0.0,
        w: -1.0,
    };
    pub const EXCITED: BlochState = BlochState { u: 0.0, v: 0.0, w: 1.0 };

    pub fn new(u: f64, v: f64, w: f64) -> Result<Self> {
        let s = BlochState { u, v, w };
        if !(u.is_finite() && v.is_finite() && w.is_finite()) {
            return invalid("Bloch components must be finite");
        }
        if s.norm_squared() > 1.0 + NORM_TOLERANCE {
            return invalid(format!(
                "Bloch vector outside the unit ball (|r|^2 = {})",
                s.norm_squared()
            ));
        }
        Ok(s)
    }

    pub fn norm_squared(&self) -> f64 {
        self.u * self.u + self.v * self.v + self.w * self.w
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Probability of finding the emitter in the excited state.
    pub fn excited_population(&self) -> f64 {
        (1.0 + self.w) / 2.0
    }

    /// Precesses the coherence about the `w` axis by `angle` (u → v for positive angles).
    pub fn precess(&self, angle: f64) -> BlochState {
        let (s, c) = angle.sin_cos();
        BlochState {
            u: self.u * c - self.v * s,
            v: self.u * s + self.v * c,
            w: self.w,
        }
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.w.is_finite()
    }
}

/// Rotates `state` by `area` radians about the equatorial axis at azimuth `phase`.
pub fn rotate(state: BlochState, area: f64, phase: f64) -> Result<BlochState> {
    if !area.is_finite() || !phase.is_finite() || !state.is_finite() {
        return invalid("rotate: non-finite input");
    }
    let (nx, ny) = (phase.cos(), phase.sin());
    let (s, c) = area.sin_cos();
    let BlochState { u, v, w } = state;
    // Rodrigues with n = (nx, ny, 0)
    let dot = nx * u + ny * v;
    let cross = (ny * w, -nx * w, nx * v - ny * u);
    Ok(BlochState {
        u: u * c + cross.0 * s + nx * dot * (1.0 - c),
        v: v * c + cross.1 * s + ny * dot * (1.0 - c),
        w: w * c + cross.2 * s,
    })
}

/// Free evolution for `duration` seconds at the given detuning (rad/s).
///
/// The coherence precesses by `detuning * duration` and is damped by
/// `exp(-duration / t2)`; the inversion relaxes towards the ground state with
/// time constant `t1`. Either lifetime may be `f64::INFINITY`.
pub fn free_evolve(state: BlochState, detuning: f64, duration: f64, t2: f64, t1: f64) -> Result<BlochState> {
    if duration.is_nan() || duration < 0.0 || duration.is_infinite() {
        return invalid(format!("free_evolve: duration must be finite and >= 0, got {duration}"));
    }
    if !detuning.is_finite() {
        return invalid("free_evolve: detuning must be finite");
    }
    if t2.is_nan() || t2 <= 0.0 || t1.is_nan() || t1 <= 0.0 {
        return invalid(format!("free_evolve: lifetimes must be > 0 (T2 = {t2}, T1 = {t1})"));
    }
    if duration == 0.0 {
        return Ok(state);
    }
    let rotated = state.precess(detuning * duration);
    let coherence = (-duration / t2).exp();
    let population = (-duration / t1).exp();
    Ok(BlochState {
        u: rotated.u * coherence,
        v: rotated.v * coherence,
        w: -1.0 + (state.w + 1.0) * population,
    })
}

/// Applies the elements of `seq` in order to `initial`.
///
/// Every pulse phase must already be concrete.
pub fn run_sequence(initial: BlochState, seq: &SequenceSpec, detuning: f64, t2: f64, t1: f64) -> Result<BlochState> {
    let mut state = initial;
    for (i, element) in seq.elements.iter().enumerate() {
        state = match element {
            Element::Pulse(p) => match p.phase {
                Phase::Fixed(phase) => rotate(state, p.area, phase)?,
                Phase::Random => {
                    return Err(Error::InvalidState(format!(
                        "pulse {} has an unresolved random phase",
                        i + 1
                    )))
                }
            },
            Element::Delay(d) => free_evolve(state, detuning, seq.delay_duration(d)?, t2, t1)?,
        };
    }
    Ok(state)
}
