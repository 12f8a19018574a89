//! Two-sided Mann-Whitney U test (normal approximation).

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyResult {
    /// U statistic of the first sample.
    pub u_statistic: f64,
    /// U statistic of the second sample; `u_statistic + u_other = n1 * n2`.
    pub u_other: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Midranks (1-based, ties share the average rank) and the tie term
/// `sum(t^3 - t)` over tie groups.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// U from midrank sums; two-sided p from the normal approximation with tie
/// correction and a 0.5 continuity correction.
pub fn mann_whitney(x: &[f64], y: &[f64]) -> Result<MannWhitneyResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("Mann-Whitney needs two non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("Mann-Whitney samples contain NaN".into()));
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, tie_term) = midranks(&pooled);
    let rank_sum_x: f64 = ranks[..n1].iter().sum();
    let u_x = rank_sum_x - (n1 * (n1 + 1)) as f64 / 2.0;
    let product = (n1 * n2) as f64;
    let u_y = product - u_x;

    let n = (n1 + n2) as f64;
    let variance = product / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if variance <= 0.0 {
        1.0
    } else {
        let z = ((u_x - product / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
        let std_normal = Normal::standard();
        (2.0 * std_normal.sf(z)).clamp(0.0, 1.0)
    };
    Ok(MannWhitneyResult { u_statistic: u_x, u_other: u_y, p_value, n1, n2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complete_separation_gives_zero_u() {
        let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert_eq!(r.u_other, 4.0);
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let x = [0.3, 1.2, 0.7, 2.2, 1.9];
        assert!(mann_whitney(&x, &x).unwrap().p_value > 0.9);
        assert_eq!(mann_whitney(&[1.0; 4], &[1.0; 3]).unwrap().p_value, 1.0);
    }

    #[test]
    fn midranks_share_ties() {
        let (r, tie) = midranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(tie, 6.0);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(mann_whitney(&[], &[1.0]).is_err());
    }

    /// Exact two-sided p by enumerating every split of the pooled ranks.
    fn exact_p(x: &[f64], y: &[f64]) -> f64 {
        let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
        let (ranks, _) = midranks(&pooled);
        let (n1, n) = (x.len(), pooled.len());
        let mean = (n1 * y.len()) as f64 / 2.0;
        let u_of = |mask: u32| {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            s - (n1 * (n1 + 1)) as f64 / 2.0
        };
        let observed = (u_of((1u32 << n1) - 1) - mean).abs();
        let (mut hits, mut total) = (0u32, 0u32);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == n1 {
                total += 1;
                if (u_of(mask) - mean).abs() >= observed - 1e-9 {
                    hits += 1;
                }
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn matches_exact_permutation_for_six_per_group() {
        let mut rng = crate::rng::stream(21, 0);
        use rand::Rng;
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.random::<f64>() + 0.3).collect();
            let approx = mann_whitney(&x, &y).unwrap().p_value;
            assert!((approx - exact_p(&x, &y)).abs() <= 0.02);
        }
    }

    proptest! {
        #[test]
        fn u_statistics_sum_to_product(
            x in prop::collection::vec(-10.0f64..10.0, 1..20),
            y in prop::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let r = mann_whitney(&x, &y).unwrap();
            prop_assert_eq!(r.u_statistic + r.u_other, (x.len() * y.len()) as f64);
            prop_assert!(r.u_statistic >= 0.0 && r.u_statistic <= (x.len() * y.len()) as f64);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }

        #[test]
        fn invariant_under_monotone_transform(
            x in prop::collection::vec(-3.0f64..3.0, 1..15),
            y in prop::collection::vec(-3.0f64..3.0, 1..15),
        ) {
            let f = |v: &f64| v.exp() * 2.0 + 1.0;
            let a = mann_whitney(&x, &y).unwrap();
            let b = mann_whitney(&x.iter().map(f).collect::<Vec<_>>(), &y.iter().map(f).collect::<Vec<_>>()).unwrap();
            prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        }
    }
}
