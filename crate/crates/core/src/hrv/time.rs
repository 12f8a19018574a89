//! Time-domain HRV measures over raw intervals in seconds.

use crate::error::{Error, Result};

/// Successive-difference threshold for NN20, in seconds.
pub const NN20_THRESHOLD_S: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFeatures {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation of successive differences.
    pub sdsd: f64,
    pub nn20: usize,
    pub pnn20: f64,
    pub rmssd: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn successive_differences(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] - w[0]).collect()
}

pub fn time_features(intervals: &[f64]) -> Result<TimeFeatures> {
    if intervals.len() < 2 {
        return Err(Error::Data(format!("time-domain features need at least 2 intervals, got {}", intervals.len())));
    }
    let diffs = successive_differences(intervals);
    let mean_diff = mean(&diffs);
    let mean_sq = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
    let var_diff = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / diffs.len() as f64;
    let nn20 = diffs.iter().filter(|d| d.abs() > NN20_THRESHOLD_S).count();
    Ok(TimeFeatures {
        mean: mean(intervals),
        median: median(intervals),
        sdsd: var_diff.sqrt(),
        nn20,
        pnn20: nn20 as f64 / diffs.len() as f64,
        rmssd: mean_sq.sqrt(),
    })
}
