//! Band powers of unevenly sampled IBI series via the Lomb-Scargle periodogram.
//!
//! The IBI value of each beat is sampled at that beat's time, so no
//! resampling or interpolation is involved. The periodogram is scaled by
//! `T / N` (record length over beat count) so that it is a one-sided density
//! whose integral approximates the series variance; band powers are in s².

use std::f64::consts::PI;

use crate::dataset::IbiSeries;
use crate::error::{Error, Result};

pub const HF_BAND: (f64, f64) = (0.15, 0.4);
pub const LF_BAND: (f64, f64) = (0.04, 0.15);
pub const VLF_BAND: (f64, f64) = (0.003, 0.04);
/// Integration grid step in Hz.
pub const GRID_STEP_HZ: f64 = 0.001;

/// Variance-scaled Lomb-Scargle density at each frequency.
pub fn lomb_scargle(times: &[f64], values: &[f64], freqs: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let span = times[n - 1] - times[0];
    let scale = span / n as f64;

    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let (s2, c2) = times.iter().fold((0.0, 0.0), |(s, c), &t| {
                let (sin, cos) = (2.0 * w * t).sin_cos();
                (s + sin, c + cos)
            });
            let tau = s2.atan2(c2) / (2.0 * w);
            let (mut yc, mut ys, mut cc, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for (&t, &v) in times.iter().zip(&y) {
                let (sin, cos) = (w * (t - tau)).sin_cos();
                yc += v * cos;
                ys += v * sin;
                cc += cos * cos;
                ss += sin * sin;
            }
            let term = |num: f64, den: f64| if den > 0.0 { num * num / den } else { 0.0 };
            scale * (term(yc, cc) + term(ys, ss))
        })
        .collect()
}

/// Integration nodes: both band edges plus every grid multiple strictly inside.
pub fn band_grid(f_lo: f64, f_hi: f64) -> Vec<f64> {
    let eps = 1e-9 * GRID_STEP_HZ;
    let mut grid = vec![f_lo];
    let mut k = (f_lo / GRID_STEP_HZ).floor() as i64 + 1;
    loop {
        let f = k as f64 * GRID_STEP_HZ;
        if f >= f_hi - eps {
            break;
        }
        if f > f_lo + eps {
            grid.push(f);
        }
        k += 1;
    }
    grid.push(f_hi);
    grid
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Integrated periodogram power of the series over `[f_lo, f_hi]` Hz.
pub fn lomb_scargle_power(series: &IbiSeries, band: (f64, f64)) -> Result<f64> {
    band_power(&series.intervals, band)
}

pub fn band_power(intervals: &[f64], (f_lo, f_hi): (f64, f64)) -> Result<f64> {
    if intervals.len() < 4 {
        return Err(Error::Data(format!("spectral features need at least 4 intervals, got {}", intervals.len())));
    }
    let min_interval = intervals.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_interval > 0.0) {
        return Err(Error::Data("intervals must be positive".into()));
    }
    let nyquist = 0.5 / min_interval;
    if !(f_lo > 0.0 && f_hi > f_lo && f_hi <= nyquist) {
        return Err(Error::InvalidArgument(format!(
            "band [{f_lo}, {f_hi}] Hz must satisfy 0 < lo < hi <= {nyquist:.4}"
        )));
    }
    let mut t = 0.0;
    let times: Vec<f64> = intervals
        .iter()
        .map(|v| {
            t += v;
            t
        })
        .collect();
    let grid = band_grid(f_lo, f_hi);
    let density = lomb_scargle(&times, intervals, &grid);
    Ok(trapezoid(&grid, &density).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Beat series whose interval is modulated sinusoidally in time.
    fn modulated(freq: f64, beats: usize) -> Vec<f64> {
        let mut t = 0.0;
        (0..beats)
            .map(|_| {
                let v = 0.9 + 0.05 * (2.0 * PI * freq * t).sin();
                t += v;
                v
            })
            .collect()
    }

    /// Least-squares sinusoid fit at one frequency: explained sum of squares
    /// of `a cos(wt) + b sin(wt)` on the mean-removed series, scaled by `T/N`.
    fn least_squares_density(times: &[f64], values: &[f64], f: f64) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let w = 2.0 * PI * f;
        let (mut scc, mut sss, mut scs, mut syc, mut sys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &v) in times.iter().zip(values) {
            let (s, c) = (w * t).sin_cos();
            let y = v - mean;
            scc += c * c;
            sss += s * s;
            scs += c * s;
            syc += y * c;
            sys += y * s;
        }
        let det = scc * sss - scs * scs;
        let a = (syc * sss - sys * scs) / det;
        let b = (sys * scc - syc * scs) / det;
        let ess = a * syc + b * sys;
        ess * (times[times.len() - 1] - times[0]) / n
    }

    fn cumulative(x: &[f64]) -> Vec<f64> {
        let mut t = 0.0;
        x.iter()
            .map(|v| {
                t += v;
                t
            })
            .collect()
    }

    #[test]
    fn matches_least_squares_oracle() {
        let x = modulated(0.25, 300);
        let times = cumulative(&x);
        let freqs = [0.01, 0.05, 0.1, 0.2, 0.25, 0.33];
        let ls = lomb_scargle(&times, &x, &freqs);
        for (&f, &p) in freqs.iter().zip(&ls) {
            let oracle = least_squares_density(&times, &x, f);
            assert!((p - oracle).abs() <= 1e-9 * oracle.max(1e-12), "f={f}: {p} vs {oracle}");
        }
    }

    #[test]
    fn hf_modulation_dominates_hf_band() {
        let x = modulated(0.25, 300);
        let hf = band_power(&x, HF_BAND).unwrap();
        let lf = band_power(&x, LF_BAND).unwrap();
        let vlf = band_power(&x, VLF_BAND).unwrap();
        assert!(hf > 5.0 * (lf + vlf), "hf {hf} lf {lf} vlf {vlf}");
        // Integrated power is close to the modulation variance 0.05^2 / 2.
        assert!((hf / (0.05f64.powi(2) / 2.0) - 1.0).abs() < 0.2, "hf {hf}");
    }

    #[test]
    fn lf_modulation_dominates_lf_band() {
        let x = modulated(0.1, 300);
        let hf = band_power(&x, HF_BAND).unwrap();
        let lf = band_power(&x, LF_BAND).unwrap();
        let vlf = band_power(&x, VLF_BAND).unwrap();
        assert!(lf > 5.0 * (hf + vlf), "hf {hf} lf {lf} vlf {vlf}");
    }

    #[test]
    fn constant_series_has_no_power() {
        let x = vec![0.85; 120];
        for band in [HF_BAND, LF_BAND, VLF_BAND] {
            assert!(band_power(&x, band).unwrap() < 1e-12);
        }
    }

    #[test]
    fn band_powers_are_additive() {
        let x = modulated(0.12, 200);
        let whole = band_power(&x, (0.04, 0.4)).unwrap();
        // On-grid splits add no node; an off-grid split only perturbs one trapezoid.
        for (split, tol) in [(0.1, 1e-9), (0.15, 1e-9), (0.3234567, 1e-3)] {
            let left = band_power(&x, (0.04, split)).unwrap();
            let right = band_power(&x, (split, 0.4)).unwrap();
            assert!(((left + right) - whole).abs() <= tol * whole, "split {split}");
        }
    }

    #[test]
    fn rejects_bad_bands_and_short_series() {
        let x = vec![0.8; 50];
        assert!(band_power(&x, (0.0, 0.1)).is_err());
        assert!(band_power(&x, (0.2, 0.1)).is_err());
        assert!(band_power(&x, (0.1, 0.7)).is_err());
        assert!(band_power(&x[..3], HF_BAND).is_err());
    }

    #[test]
    fn grid_includes_edges_once() {
        let g = band_grid(0.04, 0.15);
        assert_eq!(g.len(), 111);
        assert_eq!(g[0], 0.04);
        assert_eq!(*g.last().unwrap(), 0.15);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let odd = band_grid(0.0405, 0.0421);
        assert_eq!(odd.len(), 4);
    }
}
