//! Simulation and analysis of fluorescence-detected photon echoes.
//!
//! A three-pulse echo sequence (π/2 – τ – π – τ – π/2) converts the echo
//! coherence into excited-state population, which is read out as integrated
//! fluorescence. With shot-to-shot random pulse phases the mean fluorescence
//! carries no echo information, but its variance decays with the coherence
//! lifetime `T2`. This crate provides:
//!
//! - [`bloch`]: Bloch-vector kinematics, pulse sequences and a small sequence notation.
//! - [`echo_model`]: closed-form intensities, variances, sensitivity and unit conversions.
//! - [`montecarlo`]: a seeded, order-independent shot-by-shot simulator with a photon-counting detector.
//! - [`analysis`]: robust moments, histograms and damped Gauss-Newton curve fitting.
//! - [`cli`]: configuration files, figure presets and CSV/JSON emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analysis;
pub mod bloch;
pub mod cli;
pub mod echo_model;
pub mod error;
pub mod montecarlo;

pub use error::{Error, Result};
