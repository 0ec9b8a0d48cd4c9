//! Small statistics helpers: sample summaries and goodness-of-fit tests.

use crate::error::{Error, Result};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Quantile levels reported in every [`SampleSummary`].
pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

/// Mean, standard error and quantiles of a sample.
///
/// Computed on a sorted copy of the data, so the summary depends only on the
/// sample as a multiset: merging replica batches in any order yields
/// bit-identical results.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation divided by sqrt(count); 0 for count < 2.
    pub stderr: f64,
    /// Values at [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
}

impl SampleSummary {
    pub fn from_samples(samples: &[f64]) -> SampleSummary {
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self::from_sorted(&sorted)
    }

    pub fn from_sorted(sorted: &[f64]) -> SampleSummary {
        let count = sorted.len();
        if count == 0 {
            return SampleSummary { count, mean: f64::NAN, stderr: f64::NAN, quantiles: [f64::NAN; 5] };
        }
        let mean = sorted.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let ss: f64 = sorted.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (count as f64 - 1.0)).sqrt() / (count as f64).sqrt()
        } else {
            0.0
        };
        let quantiles = QUANTILE_LEVELS.map(|p| quantile_sorted(sorted, p));
        SampleSummary { count, mean, stderr, quantiles }
    }

    pub fn median(&self) -> f64 {
        self.quantiles[2]
    }
}

/// Linear-interpolation quantile of pre-sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone)]
pub struct GofResult {
    pub statistic: f64,
    pub df: u64,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against class probabilities.
///
/// Classes with zero expected probability must have zero observed count
/// (otherwise the fit is rejected outright with p = 0).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<GofResult> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(Error::Domain("observed and probability vectors must have equal nonzero length".into()));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Domain("empty sample in chi-square test".into()));
    }
    let psum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (psum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("class probabilities must be in [0,1] and sum to 1".into()));
    }
    let mut statistic = 0.0;
    let mut classes = 0u64;
    for (&o, &p) in observed.iter().zip(probs) {
        if p == 0.0 {
            if o > 0 {
                return Ok(GofResult { statistic: f64::INFINITY, df: observed.len() as u64 - 1, p_value: 0.0 });
            }
            continue;
        }
        classes += 1;
        let e = p * total as f64;
        statistic += (o as f64 - e) * (o as f64 - e) / e;
    }
    if classes < 2 {
        return Err(Error::Domain("chi-square test needs at least two classes with positive probability".into()));
    }
    let df = classes - 1;
    let chi = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    let p_value = 1.0 - chi.cdf(statistic);
    Ok(GofResult { statistic, df, p_value })
}
