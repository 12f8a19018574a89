//! Sample entropy and its multiscale aggregate.

use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 2;
pub const TOLERANCE_FACTOR: f64 = 0.2;
pub const MAX_SCALE: usize = 5;
pub const MIN_LENGTH: usize = 40;

/// Template-match counts at embedding lengths `m` and `m + 1`, using the
/// first `n - m` templates for both so the ratio is well defined.
pub fn match_counts(x: &[f64], m: usize, r: f64) -> (u64, u64) {
    let n = x.len();
    if n <= m {
        return (0, 0);
    }
    let templates = n - m;
    let (mut b, mut a) = (0u64, 0u64);
    for i in 0..templates {
        for j in i + 1..templates {
            if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= r) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= r {
                    a += 1;
                }
            }
        }
    }
    (b, a)
}

/// `-ln(A / B)`, or `None` when either count is zero.
pub fn sample_entropy(x: &[f64], m: usize, r: f64) -> Option<f64> {
    let (b, a) = match_counts(x, m, r);
    if a == 0 || b == 0 {
        return None;
    }
    Some(-(a as f64 / b as f64).ln())
}

/// Averages of non-overlapping blocks of `scale` values; a trailing partial
/// block is dropped.
pub fn coarse_grain(x: &[f64], scale: usize) -> Vec<f64> {
    x.chunks_exact(scale).map(|c| c.iter().sum::<f64>() / scale as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleEntropy {
    /// Mean over the scales where the entropy is defined.
    pub value: f64,
    /// Per-scale entropy; `None` marks a scale with no template matches.
    pub per_scale: Vec<Option<f64>>,
}

impl MultiscaleEntropy {
    pub fn undefined_scales(&self) -> Vec<usize> {
        self.per_scale.iter().enumerate().filter(|(_, v)| v.is_none()).map(|(i, _)| i + 1).collect()
    }
}

pub fn multiscale_entropy(x: &[f64]) -> Result<MultiscaleEntropy> {
    if x.len() < MIN_LENGTH {
        return Err(Error::Data(format!("multiscale entropy needs at least {MIN_LENGTH} intervals, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sigma = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let r = TOLERANCE_FACTOR * sigma;

    let per_scale: Vec<Option<f64>> =
        (1..=MAX_SCALE).map(|s| sample_entropy(&coarse_grain(x, s), EMBEDDING_DIM, r)).collect();
    let defined: Vec<f64> = per_scale.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Numerical("sample entropy undefined at every scale".into()));
    }
    let result = MultiscaleEntropy { value: defined.iter().sum::<f64>() / defined.len() as f64, per_scale };
    let missing = result.undefined_scales();
    if !missing.is_empty() {
        log::debug!("sample entropy undefined at scales {missing:?}; excluded from mean");
    }
    Ok(result)
}
