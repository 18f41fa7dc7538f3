//! Detected intensity and SNR versus ensemble size, for comparing
//! fluorescence-detected and directly detected echoes.

use serde::{Deserialize, Serialize};

use crate::echo_model::{direct_echo_intensity, snr_variance_detection, SensitivityParams};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub n_emitters: f64,
    /// Integrated fluorescence, `N/2`.
    pub i_fluo: f64,
    /// Directly detected echo, `N²·A_sp·τ_echo/4`.
    pub i_echo: f64,
    pub snr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub rows: Vec<SensitivityRow>,
    /// Ensemble size at which both intensities are equal.
    pub crossover_n: f64,
}

pub fn sensitivity_table(s: &SensitivityParams, n_values: &[f64]) -> Result<SensitivityTable> {
    s.validate()?;
    if !(s.a_sp > 0.0) {
        return invalid("A_sp must be > 0 for a crossover");
    }
    let rows = n_values
        .iter()
        .map(|&n| {
            if !(n > 0.0 && n.is_finite()) {
                return invalid(format!("N values must be > 0, got {n}"));
            }
            Ok(SensitivityRow {
                n_emitters: n,
                i_fluo: n / 2.0,
                i_echo: direct_echo_intensity(n, s.a_sp, s.tau_echo)?,
                snr: snr_variance_detection(n, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityTable {
        rows,
        crossover_n: 2.0 / (s.a_sp * s.tau_echo),
    })
}

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SensitivityParams {
        SensitivityParams {
            k: 0.04,
            n_shots: 1800,
            tau_echo: 800e-9,
            a_sp: 27.0,
        }
    }

    #[test]
    fn reference_rows() {
        let t = sensitivity_table(&params(), &[2500.0, 84.0]).unwrap();
        let r = t.rows[0];
        assert!((r.i_fluo - 1250.0).abs() < 1e-9);
        assert!((r.i_echo - 33.75).abs() < 1e-9);
        assert!((r.snr - 30.0).abs() < 1e-9);
        assert!((t.rows[1].snr - 1.008).abs() < 1e-9);
    }

    #[test]
    fn crossover_equalizes_intensities() {
        let t = sensitivity_table(&params(), &[]).unwrap();
        assert!((t.crossover_n - 92_592.592_592_592_6).abs() < 1e-6);
        let at = sensitivity_table(&params(), &[t.crossover_n]).unwrap().rows[0];
        assert!((at.i_fluo / at.i_echo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_n() {
        assert!(sensitivity_table(&params(), &[0.0]).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1.0, 1e6, 7);
        assert_eq!(g.len(), 7);
        assert!((g[3] - 1e3).abs() < 1e-9);
        assert!((g[6] - 1e6).abs() < 1e-6);
    }
}
