//! ECG beat detection (combined adaptive threshold) and IBI extraction.
//!
//! The detector follows the three-component threshold scheme for real-time QRS
//! detection: a steep-slope threshold `M` learned from recent QRS amplitudes,
//! an integrating threshold `F` that tracks high-frequency activity, and a
//! beat-expectation threshold `R` that lowers the bar when a beat is overdue.
//! A beat is declared where the smoothed slope signal exceeds `M + F + R`
//! outside the refractory interval.

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, IbiSeries, Sample, Source, ValenceLabel};
use crate::error::{Error, Result};
use crate::rng;

pub const MIN_SAMPLING_RATE_HZ: f64 = 100.0;
pub const REFRACTORY_S: f64 = 0.2;
const BANDPASS_LOW_HZ: f64 = 0.5;
const BANDPASS_HIGH_HZ: f64 = 40.0;
const SMOOTHING_S: f64 = 0.040;
const REFINE_WINDOW_S: f64 = 0.060;
const LEARNING_WINDOW_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EcgTrace {
    pub subject_id: String,
    pub stimulus_id: String,
    pub sampling_rate_hz: f64,
    /// Millivolts.
    pub samples: Vec<f64>,
}

impl EcgTrace {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_rate_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sampling_rate_hz.is_finite() || self.sampling_rate_hz < MIN_SAMPLING_RATE_HZ {
            return Err(Error::Data(format!(
                "sampling rate {} Hz below {MIN_SAMPLING_RATE_HZ} Hz",
                self.sampling_rate_hz
            )));
        }
        if (self.samples.len() as f64) < 2.0 * self.sampling_rate_hz {
            return Err(Error::Data(format!(
                "trace too short: {} samples at {} Hz (need 2 s)",
                self.samples.len(),
                self.sampling_rate_hz
            )));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite ECG sample at index {i}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatAnnotations {
    pub peak_times_s: Vec<f64>,
}

/// Second-order Butterworth section (RBJ cookbook coefficients).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butterworth(cutoff_hz: f64, fs: f64, highpass: bool) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / std::f64::consts::SQRT_2;
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Self { b: [b[0] / a0, b[1] / a0, b[2] / a0], a: [-2.0 * cos / a0, (1.0 - alpha) / a0] }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * out + z2;
            z2 = self.b[2] * input - self.a[1] * out;
            *v = out;
        }
    }
}

/// Zero-phase band-pass: forward-backward application of both sections, with
/// odd reflection at the edges to tame start-up transients.
fn bandpass(signal: &[f64], fs: f64) -> Vec<f64> {
    let n = signal.len();
    let pad = (fs as usize).min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * signal[0] - signal[k]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|k| 2.0 * signal[n - 1] - signal[n - 1 - k]));

    let sections = [Biquad::butterworth(BANDPASS_LOW_HZ, fs, true), Biquad::butterworth(BANDPASS_HIGH_HZ, fs, false)];
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

fn centered_moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + width - half).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(0.0, f64::max)
}

fn mean_of(x: &VecDeque<f64>) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Detects R peaks in a single-lead ECG trace.
pub fn detect_beats(trace: &EcgTrace) -> Result<BeatAnnotations> {
    trace.validate()?;
    let fs = trace.sampling_rate_hz;
    let n = trace.samples.len();
    let secs = |s: f64| (s * fs).round() as usize;

    let filtered = bandpass(&trace.samples, fs);
    let mut slope = vec![0.0; n];
    for i in 1..n - 1 {
        slope[i] = (filtered[i + 1] - filtered[i - 1]).abs();
    }
    let y = centered_moving_average(&slope, secs(SMOOTHING_S));

    let ms50 = secs(0.05).max(1);
    let ms200 = secs(REFRACTORY_S);
    let ms350 = secs(0.35);
    let ms1200 = secs(1.2);
    // Integrating-threshold divisor, given for 250 Hz.
    let f_divisor = 150.0 * fs / 250.0;

    let m0 = 0.6 * max_of(&y[..secs(LEARNING_WINDOW_S).min(n)]);
    let mut mm: VecDeque<f64> = std::iter::repeat_n(m0, 5).collect();
    let mut m = m0;
    let mut new_m5 = 0.0;
    let mut f = 0.0;
    let mut r = 0.0;
    let mut rr: VecDeque<usize> = VecDeque::with_capacity(5);
    let mut rm = 0usize;
    let mut last: Option<usize> = None;
    let mut crossings = Vec::new();

    for i in 0..n {
        if let Some(q) = last {
            if i < q + ms200 {
                new_m5 = 0.6 * max_of(&y[q..=i]);
                let prev = *mm.back().unwrap();
                if new_m5 > 1.5 * prev {
                    new_m5 = 1.1 * prev;
                }
            } else if i == q + ms200 {
                mm.pop_front();
                mm.push_back(new_m5);
                m = mean_of(&mm);
            } else if i < q + ms1200 {
                let frac = (i - q - ms200) as f64 / (ms1200 - ms200) as f64;
                m = mean_of(&mm) * (1.0 - 0.4 * frac);
            } else {
                m = 0.6 * mean_of(&mm);
            }
        }

        if i >= ms350 {
            let window = &y[i - ms350..i];
            f += (max_of(&window[ms350 - ms50..]) - max_of(&window[..ms50])) / f_divisor;
        }

        if let Some(q) = last {
            if rm > 0 {
                if i < q + 2 * rm / 3 {
                    r = 0.0;
                } else if i <= q + rm {
                    r = (m - mean_of(&mm)) / 1.4;
                }
            }
        }

        let threshold = m + f + r;
        let outside_refractory = last.is_none_or(|q| i > q + ms200);
        if outside_refractory && y[i] > threshold {
            if let Some(q) = last {
                if rr.len() == 5 {
                    rr.pop_front();
                }
                rr.push_back(i - q);
                rm = rr.iter().sum::<usize>() / rr.len();
            }
            last = Some(i);
            new_m5 = 0.0;
            r = 0.0;
            crossings.push(i);
        }
    }

    // Refine each crossing to the local maximum of the filtered signal.
    let half = secs(REFINE_WINDOW_S);
    let mut peaks: Vec<(usize, f64)> = Vec::with_capacity(crossings.len());
    for &c in &crossings {
        let lo = c.saturating_sub(half);
        let hi = (c + half).min(n - 1);
        let (idx, amp) =
            (lo..=hi)
                .map(|k| (k, filtered[k]))
                .fold((lo, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        match peaks.last_mut() {
            Some(prev) if (idx as f64 - prev.0 as f64) < REFRACTORY_S * fs => {
                if amp > prev.1 {
                    *prev = (idx, amp);
                }
            }
            _ => peaks.push((idx, amp)),
        }
    }
    Ok(BeatAnnotations { peak_times_s: peaks.into_iter().map(|(k, _)| k as f64 / fs).collect() })
}

/// Successive differences of the peak times as an ECG-sourced series.
pub fn ibis_from_beats(beats: &BeatAnnotations, subject_id: &str, stimulus_id: &str) -> Result<IbiSeries> {
    let p = &beats.peak_times_s;
    if p.len() < 2 {
        return Err(Error::Data(format!("need at least 2 beats, found {}", p.len())));
    }
    Ok(IbiSeries {
        subject_id: subject_id.to_owned(),
        stimulus_id: stimulus_id.to_owned(),
        source: Source::Ecg,
        intervals: p.windows(2).map(|w| w[1] - w[0]).collect(),
    })
}

/// QRS template: narrow positive R wave flanked by small negative Q and S lobes.
fn qrs_template(dt: f64) -> f64 {
    let g = |mu: f64, sigma: f64| (-0.5 * ((dt - mu) / sigma).powi(2)).exp();
    g(0.0, 0.010) - 0.12 * g(-0.025, 0.008) - 0.20 * g(0.025, 0.008)
}

/// Renders a synthetic ECG with one QRS complex per beat time plus white noise.
/// The trace runs one second past the last beat, and at least 2 s.
pub fn synth_ecg(beat_times_s: &[f64], sampling_rate_hz: f64, noise_std: f64, seed: u64) -> Result<EcgTrace> {
    if !(sampling_rate_hz >= MIN_SAMPLING_RATE_HZ) {
        return Err(Error::InvalidArgument(format!("sampling rate {sampling_rate_hz} below 100 Hz")));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::InvalidArgument(format!("noise_std must be finite and >= 0, got {noise_std}")));
    }
    if beat_times_s.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument("beat times must be finite and non-negative".into()));
    }
    if beat_times_s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("beat times must be strictly increasing".into()));
    }
    let duration = beat_times_s.last().map_or(0.0, |t| t + 1.0).max(2.0);
    let n = (duration * sampling_rate_hz).ceil() as usize;
    let mut samples = vec![0.0; n];
    let reach = (0.1 * sampling_rate_hz).ceil() as isize;
    for &t in beat_times_s {
        let center = (t * sampling_rate_hz).round() as isize;
        for k in (center - reach).max(0)..(center + reach + 1).min(n as isize) {
            samples[k as usize] += qrs_template(k as f64 / sampling_rate_hz - t);
        }
    }
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        let mut rng = rng::stream(seed, 0);
        for v in &mut samples {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(EcgTrace { subject_id: String::new(), stimulus_id: String::new(), sampling_rate_hz, samples })
}

/// One line of an ECG input file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EcgRecord {
    subject_id: String,
    stimulus_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<Source>,
    raw_report: i64,
    scale_min: i64,
    scale_max: i64,
    sampling_rate_hz: f64,
    ecg_mv: Vec<f64>,
}

pub fn parse_ecg_records(reader: impl BufRead) -> Result<Vec<(EcgTrace, ValenceLabel)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let rec_err = |message: String| Error::Record { line: line_no, message };
        let line = line.map_err(|e| rec_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EcgRecord = serde_json::from_str(&line).map_err(|e| rec_err(e.to_string()))?;
        if rec.source.is_some_and(|s| s != Source::Ecg) {
            return Err(rec_err("ECG records must have source \"ecg\"".into()));
        }
        let label =
            ValenceLabel::new(rec.raw_report, rec.scale_min, rec.scale_max).map_err(|e| rec_err(e.to_string()))?;
        let trace = EcgTrace {
            subject_id: rec.subject_id,
            stimulus_id: rec.stimulus_id,
            sampling_rate_hz: rec.sampling_rate_hz,
            samples: rec.ecg_mv,
        };
        trace.validate().map_err(|e| rec_err(e.to_string()))?;
        out.push((trace, label));
    }
    Ok(out)
}

pub fn load_ecg_records(path: impl AsRef<Path>) -> Result<Vec<(EcgTrace, ValenceLabel)>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ecg_records(BufReader::new(file))
}

pub fn write_ecg_records(records: &[(EcgTrace, ValenceLabel)], mut w: impl Write) -> std::io::Result<()> {
    for (trace, label) in records {
        let rec = EcgRecord {
            subject_id: trace.subject_id.clone(),
            stimulus_id: trace.stimulus_id.clone(),
            source: Some(Source::Ecg),
            raw_report: label.raw_report,
            scale_min: label.scale_min,
            scale_max: label.scale_max,
            sampling_rate_hz: trace.sampling_rate_hz,
            ecg_mv: trace.samples.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    Ok(())
}

/// Renders each IBI series as an ECG trace with its first beat one second in.
pub fn render_ecg_records(
    samples: &[Sample],
    sampling_rate_hz: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<(EcgTrace, ValenceLabel)>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let beats: Vec<f64> = std::iter::once(0.0).chain(s.series.beat_times()).map(|t| t + 1.0).collect();
            let mut trace = synth_ecg(&beats, sampling_rate_hz, noise_std, rng::derive_seed(seed, &i.to_string()))?;
            trace.subject_id = s.series.subject_id.clone();
            trace.stimulus_id = s.series.stimulus_id.clone();
            Ok((trace, s.label))
        })
        .collect()
}

/// A record that could not be turned into a valid IBI sample.
#[derive(Debug, Clone)]
pub struct SkippedRecord {
    pub index: usize,
    pub reason: String,
}

/// Runs beat detection over every trace. Records whose IBIs fall outside the
/// ingestion bounds (missed or spurious beats) are skipped and reported.
pub fn extract_ibi_dataset(records: &[(EcgTrace, ValenceLabel)]) -> Result<(Dataset, Vec<SkippedRecord>)> {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for (index, (trace, label)) in records.iter().enumerate() {
        let series = detect_beats(trace)
            .and_then(|b| ibis_from_beats(&b, &trace.subject_id, &trace.stimulus_id))
            .and_then(|s| s.validate().map(|_| s));
        match series {
            Ok(series) => samples.push(Sample { series, label: *label }),
            Err(e) => {
                log::warn!("skipping ECG record {index} ({}/{}): {e}", trace.subject_id, trace.stimulus_id);
                skipped.push(SkippedRecord { index, reason: e.to_string() });
            }
        }
    }
    Ok((Dataset::new(samples)?, skipped))
}
