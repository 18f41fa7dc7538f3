//! Outlier-rejecting sample moments.
//!
//! Samples further than `threshold` robust standard deviations from the
//! median are discarded, and the rejection is repeated on the survivors until
//! nothing more is removed. The robust scale is `1.4826·MAD`, falling back to
//! the sample standard deviation when more than half the samples coincide.
//! The reported moments are the ordinary mean and unbiased variance of the
//! survivors.

use crate::error::{invalid, Error, Result};

const MAD_TO_SIGMA: f64 = 1.482_602_218_505_602;
const MAX_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustMoments {
    pub mean: f64,
    pub variance: f64,
    pub n_kept: usize,
    pub n_discarded: usize,
    pub threshold_sigma: f64,
}

/// Mean and unbiased variance; requires at least two samples.
pub fn plain_moments(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let ss = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    Ok((mean, ss / (n - 1.0)))
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn robust_moments(samples: &[f64], threshold: f64) -> Result<RobustMoments> {
    robust_filter(samples, threshold).map(|(m, _)| m)
}

/// Like [`robust_moments`], also returning the surviving samples in input order.
pub fn robust_filter(samples: &[f64], threshold: f64) -> Result<(RobustMoments, Vec<f64>)> {
    if !(threshold > 0.0) {
        return invalid("rejection threshold must be > 0");
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return invalid("samples must be finite");
    }
    plain_moments(samples)?;
    let mut kept = samples.to_vec();
    if threshold.is_finite() {
        for _ in 0..MAX_PASSES {
            let center = median(&kept);
            let deviations: Vec<f64> = kept.iter().map(|x| (x - center).abs()).collect();
            let mut scale = MAD_TO_SIGMA * median(&deviations);
            if scale == 0.0 {
                scale = plain_moments(&kept)?.1.sqrt();
            }
            let cut = threshold * scale;
            let next: Vec<f64> = kept.iter().copied().filter(|x| (x - center).abs() <= cut).collect();
            if next.len() == kept.len() {
                break;
            }
            kept = next;
            if kept.len() < 2 {
                break;
            }
        }
    }
    let (mean, variance) = plain_moments(&kept)
        .map_err(|_| Error::DegenerateData("fewer than 2 samples survive outlier rejection".into()))?;
    let moments = RobustMoments {
        mean,
        variance,
        n_kept: kept.len(),
        n_discarded: samples.len() - kept.len(),
        threshold_sigma: threshold,
    };
    Ok((moments, kept))
}
