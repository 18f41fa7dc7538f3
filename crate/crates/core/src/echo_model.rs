//! Closed-form expressions for fluorescence-detected echoes.
//!
//! Time arguments named `two_tau` are the total free-evolution time 2τ;
//! arguments named `tau` are the half-delay τ. All times are in seconds.
//!
//! The echo amplitude decays as `exp[-(2τ/T2)^β]`, so intensities and
//! variances, which are quadratic in the amplitude, decay as
//! `exp[-2(2τ/T2)^β]`. The contrast factor `k` multiplies the coherent term.

use std::f64::consts::PI;

use log::warn;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    /// Number of emitters.
    pub n_emitters: u64,
    /// Coherence lifetime (s).
    pub t2: f64,
    /// Stretch exponent of the echo decay.
    pub beta: f64,
    /// Excited-state lifetime (s).
    pub t1: f64,
    /// Spontaneous emission rate on the echo transition (1/s).
    pub a_sp: f64,
    /// Fringe contrast factor in (0, 1].
    pub k: f64,
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_emitters < 2 {
            return invalid(format!("N must be >= 2, got {}", self.n_emitters));
        }
        if !(self.t2 > 0.0) {
            return invalid(format!("T2 must be > 0, got {}", self.t2));
        }
        if !(self.t1 > 0.0) {
            return invalid(format!("T1 must be > 0, got {}", self.t1));
        }
        if !(self.a_sp > 0.0 && self.a_sp.is_finite()) {
            return invalid(format!("A_sp must be > 0, got {}", self.a_sp));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return invalid(format!("beta must be >= 1, got {}", self.beta));
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return invalid(format!("k must lie in (0, 1], got {}", self.k));
        }
        Ok(())
    }

    fn n(&self) -> f64 {
        self.n_emitters as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserParams {
    /// Laser coherence lifetime (s); `f64::INFINITY` for a perfectly coherent laser.
    pub t2_laser: f64,
}

impl LaserParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t2_laser > 0.0) {
            return invalid(format!("T2_laser must be > 0, got {}", self.t2_laser));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityParams {
    pub k: f64,
    /// Shots per variance estimate.
    pub n_shots: u64,
    /// Echo pulse length (s).
    pub tau_echo: f64,
    /// Spontaneous emission rate (1/s).
    pub a_sp: f64,
}

impl SensitivityParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_shots < 2 {
            return invalid(format!("n must be >= 2, got {}", self.n_shots));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return invalid(format!("k must be > 0, got {}", self.k));
        }
        if !(self.tau_echo > 0.0 && self.tau_echo.is_finite()) {
            return invalid(format!("tau_echo must be > 0, got {}", self.tau_echo));
        }
        if !(self.a_sp >= 0.0 && self.a_sp.is_finite()) {
            return invalid(format!("A_sp must be >= 0, got {}", self.a_sp));
        }
        if self.a_sp * self.tau_echo > 0.1 {
            warn!(
                "A_sp * tau_echo = {} is not small; the direct echo formula is outside its range",
                self.a_sp * self.tau_echo
            );
        }
        Ok(())
    }
}

fn check_delay(t: f64, name: &str) -> Result<()> {
    if !(t >= 0.0) {
        return invalid(format!("{name} must be >= 0, got {t}"));
    }
    Ok(())
}

/// Echo amplitude factor `exp[-(two_tau/T2)^β]`.
pub fn echo_coherence(two_tau: f64, t2: f64, beta: f64) -> Result<f64> {
    check_delay(two_tau, "two_tau")?;
    if !(t2 > 0.0) {
        return invalid(format!("T2 must be > 0, got {t2}"));
    }
    if !(beta > 0.0) {
        return invalid(format!("beta must be > 0, got {beta}"));
    }
    Ok((-(two_tau / t2).powf(beta)).exp())
}

/// Expected integrated fluorescence for pulse phases ψ (second) and φ (third):
/// `N[1 + k·exp(-(2τ/T2)^β)·cos(π - 2ψ + φ)]/2`.
pub fn fluo_intensity(p: &EnsembleParams, tau: f64, psi: f64, phi: f64) -> Result<f64> {
    p.validate()?;
    check_delay(tau, "tau")?;
    let c = echo_coherence(2.0 * tau, p.t2, p.beta)?;
    Ok(p.n() * (1.0 + p.k * c * (PI - 2.0 * psi + phi).cos()) / 2.0)
}

/// Mean fluorescence of the fixed-phase X–Y–X sequence (ψ = π/2, φ = 0).
pub fn fluo_mean_fixed(p: &EnsembleParams, tau: f64) -> Result<f64> {
    fluo_intensity(p, tau, PI / 2.0, 0.0)
}

/// Mean fluorescence under uniformly random ψ, φ; independent of τ.
pub fn fluo_mean_random(p: &EnsembleParams) -> Result<f64> {
    p.validate()?;
    Ok(p.n() / 2.0)
}

/// Fluorescence variance under uniformly random ψ, φ: `k²N²·exp[-2(2τ/T2)^β]/8`.
pub fn fluo_variance_random(p: &EnsembleParams, tau: f64) -> Result<f64> {
    p.validate()?;
    check_delay(tau, "tau")?;
    let c = echo_coherence(2.0 * tau, p.t2, p.beta)?;
    Ok(p.k * p.k * p.n() * p.n() * c * c / 8.0)
}

/// Integrated directly detected echo for `2τ ≪ T2`: `N²·A_sp·τ_echo/4`.
pub fn direct_echo_intensity(n_emitters: f64, a_sp: f64, tau_echo: f64) -> Result<f64> {
    if !(n_emitters >= 0.0 && a_sp >= 0.0 && tau_echo >= 0.0) {
        return invalid("direct_echo_intensity: inputs must be non-negative");
    }
    if a_sp * tau_echo > 0.1 {
        warn!("A_sp * tau_echo = {} is not small", a_sp * tau_echo);
    }
    Ok(n_emitters * n_emitters * a_sp * tau_echo / 4.0)
}

/// `Γ_h = 1/(π·T2)` in Hz.
pub fn homogeneous_linewidth(t2: f64) -> Result<f64> {
    if !(t2 > 0.0) {
        return invalid(format!("T2 must be > 0, got {t2}"));
    }
    Ok(1.0 / (PI * t2))
}

/// Inverse of [`homogeneous_linewidth`].
pub fn coherence_time_from_linewidth(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return invalid(format!("linewidth must be > 0, got {gamma}"));
    }
    Ok(1.0 / (PI * gamma))
}

/// Signal-to-noise ratio of variance detection at `2τ ≪ T2`: `k²·N·√(n/32)`.
pub fn snr_variance_detection(n_emitters: f64, s: &SensitivityParams) -> Result<f64> {
    s.validate()?;
    if !(n_emitters >= 0.0) {
        return invalid(format!("N must be >= 0, got {n_emitters}"));
    }
    Ok(s.k * s.k * n_emitters * (s.n_shots as f64 / 32.0).sqrt())
}

/// Smallest integer `N` whose SNR reaches `r_target`.
///
/// The result may be below 2, the minimum ensemble for which variance
/// detection is meaningful; callers reporting it should say so.
pub fn min_detectable_emitters(s: &SensitivityParams, r_target: f64) -> Result<u64> {
    s.validate()?;
    if !(r_target > 0.0 && r_target.is_finite()) {
        return invalid(format!("target SNR must be > 0, got {r_target}"));
    }
    let per_emitter = snr_variance_detection(1.0, s)?;
    let mut n = (r_target / per_emitter).ceil().max(0.0) as u64;
    // guard the ceil against rounding on either side
    while n > 0 && snr_variance_detection((n - 1) as f64, s)? >= r_target {
        n -= 1;
    }
    while snr_variance_detection(n as f64, s)? < r_target {
        n += 1;
    }
    Ok(n)
}

/// 1σ uncertainty `N/√(2n)` of the sample variance of the shot-noise floor `N/2`.
pub fn variance_estimator_sigma(n_emitters: f64, n_shots: u64) -> Result<f64> {
    if n_shots < 2 {
        return invalid(format!("n must be >= 2, got {n_shots}"));
    }
    if !(n_emitters >= 2.0) {
        return invalid(format!("N must be >= 2, got {n_emitters}"));
    }
    Ok(n_emitters / (2.0 * n_shots as f64).sqrt())
}

/// Shot-noise variance of the integrated fluorescence, `N/2`.
pub fn shot_noise_variance(n_emitters: f64) -> f64 {
    n_emitters / 2.0
}

/// Fixed-phase fringe contrast reduction from laser phase diffusion: `exp(-2τ/T2,laser)`.
pub fn laser_fringe_contrast(two_tau: f64, laser: &LaserParams) -> Result<f64> {
    check_delay(two_tau, "two_tau")?;
    laser.validate()?;
    Ok((-two_tau / laser.t2_laser).exp())
}

/// Fraction of the fluorescence emitted inside `[gate_delay, gate_delay + gate_width]`.
pub fn gate_capture_fraction(gate_delay: f64, gate_width: f64, t1: f64) -> Result<f64> {
    if !(gate_delay >= 0.0 && gate_width >= 0.0) {
        return invalid("gate delay and width must be >= 0");
    }
    if !(t1 > 0.0) {
        return invalid(format!("T1 must be > 0, got {t1}"));
    }
    Ok((-gate_delay / t1).exp() - (-(gate_delay + gate_width) / t1).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{E, FRAC_PI_2};

    fn ensemble(n: u64, k: f64, t2: f64, beta: f64) -> EnsembleParams {
        EnsembleParams {
            n_emitters: n,
            t2,
            beta,
            t1: 11e-3,
            a_sp: 27.0,
            k,
        }
    }

    fn measured_sensitivity() -> SensitivityParams {
        SensitivityParams {
            k: 0.04,
            n_shots: 1800,
            tau_echo: 800e-9,
            a_sp: 27.0,
        }
    }

    #[test]
    fn echo_coherence_examples() {
        assert_eq!(echo_coherence(0.0, 37e-6, 2.0).unwrap(), 1.0);
        assert_relative_eq!(echo_coherence(1.0, 1.0, 1.0).unwrap(), 1.0 / E, max_relative = 1e-15);
        assert_relative_eq!(
            echo_coherence(37e-6, 37e-6, 2.0).unwrap(),
            1.0 / E,
            max_relative = 1e-15
        );
        assert!(echo_coherence(1.0, 0.0, 1.0).is_err());
        assert!(echo_coherence(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn fluo_intensity_examples() {
        let p = ensemble(2500, 1.0, 37e-6, 1.0);
        assert_relative_eq!(fluo_intensity(&p, 0.0, FRAC_PI_2, 0.0).unwrap(), 2500.0);
        assert!(fluo_intensity(&p, 0.0, 0.0, 0.0).unwrap().abs() < 1e-9);
        // 2τ = T2 at τ = 18.5 µs: 1250·(1 + e⁻¹)
        let v = fluo_intensity(&p, 18.5e-6, FRAC_PI_2, 0.0).unwrap();
        assert_relative_eq!(v, 1250.0 * (1.0 + (-1.0f64).exp()), max_relative = 1e-12);
        assert_relative_eq!(v, 1709.849301464, max_relative = 1e-11);
        let bad = ensemble(1, 1.0, 37e-6, 1.0);
        assert!(fluo_intensity(&bad, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn fluo_mean_fixed_examples() {
        let p = ensemble(2500, 1.0, 37e-6, 1.0);
        assert_relative_eq!(fluo_mean_fixed(&p, 0.0).unwrap(), 2500.0);
        assert_relative_eq!(fluo_mean_fixed(&p, 1.0).unwrap(), 1250.0);
        let p = ensemble(2500, 0.04, 37e-6, 1.0);
        let expected = 1250.0 * (1.0 + 0.04 * (-1.6f64 / 37.0).exp());
        assert_relative_eq!(fluo_mean_fixed(&p, 0.8e-6).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 1297.88392065, max_relative = 1e-10);
    }

    #[test]
    fn fluo_variance_examples() {
        let p = ensemble(2500, 1.0, 37e-6, 1.0);
        assert_relative_eq!(fluo_variance_random(&p, 0.0).unwrap(), 781_250.0);
        let p4 = ensemble(2500, 0.04, 37e-6, 1.0);
        assert_relative_eq!(fluo_variance_random(&p4, 0.0).unwrap(), 1250.0, max_relative = 1e-12);
        let v = fluo_variance_random(&p, 18.5e-6).unwrap();
        assert_relative_eq!(v, 781_250.0 * (-2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(v, 105_730.690029, max_relative = 1e-10);
        assert_eq!(fluo_mean_random(&p).unwrap(), 1250.0);
    }

    #[test]
    fn direct_echo_examples() {
        let i_echo = direct_echo_intensity(2500.0, 27.0, 800e-9).unwrap();
        assert_relative_eq!(i_echo, 33.75, max_relative = 1e-12);
        assert_relative_eq!(1250.0 / i_echo, 37.037037, max_relative = 1e-6);
        assert_eq!(direct_echo_intensity(0.0, 27.0, 800e-9).unwrap(), 0.0);
        assert_relative_eq!(
            direct_echo_intensity(2.0, 27.0, 800e-9).unwrap(),
            2.16e-5,
            max_relative = 1e-12
        );
        assert!(direct_echo_intensity(-1.0, 27.0, 800e-9).is_err());
    }

    #[test]
    fn linewidth_examples() {
        assert_relative_eq!(homogeneous_linewidth(37e-6).unwrap(), 8602.9699, max_relative = 1e-7);
        assert_relative_eq!(homogeneous_linewidth(15e-6).unwrap(), 21220.66, max_relative = 1e-6);
        assert_relative_eq!(homogeneous_linewidth(1.0 / PI).unwrap(), 1.0, max_relative = 1e-15);
        assert!(homogeneous_linewidth(0.0).is_err());
        assert_relative_eq!(
            coherence_time_from_linewidth(homogeneous_linewidth(37e-6).unwrap()).unwrap(),
            37e-6
        );
    }

    #[test]
    fn snr_examples() {
        let s = measured_sensitivity();
        assert_relative_eq!(snr_variance_detection(84.0, &s).unwrap(), 1.008, max_relative = 1e-12);
        assert_eq!(snr_variance_detection(0.0, &s).unwrap(), 0.0);
        assert_relative_eq!(snr_variance_detection(2500.0, &s).unwrap(), 30.0, max_relative = 1e-12);
        let bad = SensitivityParams { n_shots: 1, ..s };
        assert!(snr_variance_detection(10.0, &bad).is_err());
    }

    #[test]
    fn min_emitters_examples() {
        let s = measured_sensitivity();
        assert_eq!(min_detectable_emitters(&s, 1.0).unwrap(), 84);
        assert_eq!(min_detectable_emitters(&s, 2.0).unwrap(), 167);
        let unit = SensitivityParams {
            k: 1.0,
            n_shots: 32,
            ..s
        };
        assert_eq!(min_detectable_emitters(&unit, 1.0).unwrap(), 1);
        assert!(min_detectable_emitters(&s, 0.0).is_err());
    }

    #[test]
    fn variance_estimator_examples() {
        assert_relative_eq!(
            variance_estimator_sigma(2500.0, 1800).unwrap(),
            2500.0 / 60.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(variance_estimator_sigma(2.0, 2).unwrap(), 1.0);
        let a = variance_estimator_sigma(2500.0, 100).unwrap();
        let b = variance_estimator_sigma(2500.0, 400).unwrap();
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-15);
        assert!(variance_estimator_sigma(2500.0, 1).is_err());
    }

    #[test]
    fn laser_contrast_examples() {
        let l = LaserParams { t2_laser: 15e-6 };
        assert_eq!(laser_fringe_contrast(0.0, &l).unwrap(), 1.0);
        assert_relative_eq!(
            laser_fringe_contrast(15e-6, &l).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(laser_fringe_contrast(45e-6, &l).unwrap(), 0.049787, max_relative = 1e-5);
        let perfect = LaserParams {
            t2_laser: f64::INFINITY,
        };
        assert_eq!(laser_fringe_contrast(1.0, &perfect).unwrap(), 1.0);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gate_capture_fraction(0.0, f64::INFINITY, 11e-3).unwrap(), 1.0);
        let g = gate_capture_fraction(3e-3, 40e-3, 11e-3).unwrap();
        assert_relative_eq!(
            g,
            (-3.0f64 / 11.0).exp() - (-43.0f64 / 11.0).exp(),
            max_relative = 1e-14
        );
        assert!((g - 0.741).abs() < 5e-4);
        assert_eq!(gate_capture_fraction(3e-3, 0.0, 11e-3).unwrap(), 0.0);
        assert!(gate_capture_fraction(0.0, 1.0, 0.0).is_err());
    }

    /// 2-D composite Simpson quadrature over [0, 2π)².
    fn simpson_2d(f: impl Fn(f64, f64) -> f64, m: usize) -> f64 {
        let h = 2.0 * PI / m as f64;
        let w = |i: usize| -> f64 {
            if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        };
        let mut acc = 0.0;
        for i in 0..=m {
            for j in 0..=m {
                acc += w(i) * w(j) * f(i as f64 * h, j as f64 * h);
            }
        }
        acc * h * h / 9.0 / (4.0 * PI * PI)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn phase_average_matches_closed_forms(
            n in 2u64..10_000,
            k in 0.01..1.0f64,
            t2 in 1e-6..1e-3f64,
            beta in 1.0..3.0f64,
            tau in 0.0..2e-4f64,
        ) {
            let p = ensemble(n, k, t2, beta);
            let m = simpson_2d(|psi, phi| fluo_intensity(&p, tau, psi, phi).unwrap(), 64);
            let m2 = simpson_2d(|psi, phi| fluo_intensity(&p, tau, psi, phi).unwrap().powi(2), 64);
            let nf = n as f64;
            prop_assert!((m - nf / 2.0).abs() <= 1e-10 * nf);
            let var = m2 - m * m;
            let expected = fluo_variance_random(&p, tau).unwrap();
            prop_assert!((var - expected).abs() <= 1e-10 * nf * nf);
        }

        #[test]
        fn fixed_mean_is_the_special_case(n in 2u64..10_000, k in 0.01..1.0f64, tau in 0.0..1e-4f64) {
            let p = ensemble(n, k, 37e-6, 2.0);
            prop_assert_eq!(fluo_mean_fixed(&p, tau).unwrap(), fluo_intensity(&p, tau, FRAC_PI_2, 0.0).unwrap());
            // repeated evaluation at fixed phases has no spread
            let a = fluo_intensity(&p, tau, 0.3, 1.1).unwrap();
            prop_assert_eq!(a, fluo_intensity(&p, tau, 0.3, 1.1).unwrap());
        }

        #[test]
        fn variance_decreases_with_delay(t2 in 1e-6..1e-3f64, beta in 1.0..3.0f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
            let p = ensemble(2500, 1.0, t2, beta);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-3);
            let lo_var = fluo_variance_random(&p, lo * t2).unwrap();
            let hi_var = fluo_variance_random(&p, hi * t2).unwrap();
            prop_assert!(hi_var < lo_var);
        }

        #[test]
        fn min_emitters_inverts_snr(k in 0.01..1.0f64, n in 2u64..100_000, r in 0.1..50.0f64) {
            let s = SensitivityParams { k, n_shots: n, tau_echo: 800e-9, a_sp: 27.0 };
            let nmin = min_detectable_emitters(&s, r).unwrap();
            prop_assert!(snr_variance_detection(nmin as f64, &s).unwrap() >= r);
            if nmin > 0 {
                prop_assert!(snr_variance_detection((nmin - 1) as f64, &s).unwrap() < r);
            }
        }
    }
}
