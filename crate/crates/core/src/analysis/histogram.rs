//! Equal-width histograms of per-shot counts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges; bin `i` is `[edges[i], edges[i+1])`, the last bin is closed.
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<u64>,
    /// Samples outside the range.
    pub n_outside: u64,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> u64 {
        self.bin_counts.iter().sum()
    }
}

/// Bins `samples` into `n_bins` equal bins over `range`, or over the sample
/// extent when `range` is `None`.
pub fn build_histogram(samples: &[f64], n_bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if n_bins == 0 {
        return invalid("histogram needs at least one bin");
    }
    if samples.is_empty() {
        return Err(Error::DegenerateData("cannot histogram an empty sample".into()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return invalid("samples must be finite");
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return invalid(format!("invalid histogram range [{lo}, {hi}]"));
            }
            (lo, hi)
        }
        None => {
            let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        }
    };
    let width = (hi - lo) / n_bins as f64;
    let mut bin_edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * width).collect();
    bin_edges.push(hi);
    let mut bin_counts = vec![0u64; n_bins];
    let mut n_outside = 0;
    for &x in samples {
        if x < lo || x > hi {
            n_outside += 1;
            continue;
        }
        let mut i = (((x - lo) / width) as usize).min(n_bins - 1);
        // floating-point division can land one bin off near an edge
        while i > 0 && x < bin_edges[i] {
            i -= 1;
        }
        while i + 1 < n_bins && x >= bin_edges[i + 1] {
            i += 1;
        }
        bin_counts[i] += 1;
    }
    Ok(Histogram {
        bin_edges,
        bin_counts,
        n_outside,
    })
}
