//! Synthetic IBI datasets with class-dependent beat-interval dynamics.
//!
//! Each interval is the sum of a baseline, a subject offset,
//! `hf * sin(2π 0.25 t + φ)`, `lf * sin(2π 0.08 t + ψ)`, `alternans * (-1)^k`
//! and noise, where `t` is the beat time. A cue is either coupled to the valence class
//! or drawn by an independent fair coin.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{BinaryValence, Dataset, IbiSeries, Sample, Source, ValenceLabel, IBI_MAX_S, IBI_MIN_S};
use crate::error::{Error, Result};
use crate::rng;

pub const HF_FREQ_HZ: f64 = 0.25;
pub const LF_FREQ_HZ: f64 = 0.08;

/// Amplitude of one component for each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    pub low: f64,
    pub high: f64,
    /// When false the amplitude is `low` or `high` by a fair coin,
    /// independently of the class.
    pub coupled: bool,
}

impl Cue {
    pub const fn coupled(low: f64, high: f64) -> Self {
        Self { low, high, coupled: true }
    }

    pub const fn coin(a: f64, b: f64) -> Self {
        Self { low: a, high: b, coupled: false }
    }

    pub const fn constant(v: f64) -> Self {
        Self { low: v, high: v, coupled: true }
    }

    fn draw(&self, class: BinaryValence, rng: &mut impl Rng) -> f64 {
        let high = if self.coupled { class == BinaryValence::High } else { rng.random::<bool>() };
        if high {
            self.high
        } else {
            self.low
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDynamics {
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub baseline_ibi: f64,
    /// Standard deviation of the per-subject baseline offset.
    pub subject_spread: f64,
    pub hf_depth: Cue,
    pub lf_depth: Cue,
    pub alternans: Cue,
    pub noise_std: f64,
    /// Report scale `1..=scale_max`.
    pub scale_max: i64,
}

impl SourceDynamics {
    pub fn ppg_default() -> Self {
        Self {
            n_subjects: 12,
            samples_per_subject: 20,
            baseline_ibi: 0.85,
            subject_spread: 0.06,
            hf_depth: Cue::coupled(0.0, 0.06),
            lf_depth: Cue::constant(0.04),
            alternans: Cue::constant(0.0),
            noise_std: 0.01,
            scale_max: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Beats per sample, drawn uniformly from this inclusive range.
    pub beats: (usize, usize),
    /// Fraction of each subject's samples in the Low class.
    pub low_prevalence: f64,
    pub ppg: SourceDynamics,
    pub ecg: Option<SourceDynamics>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { beats: (40, 70), low_prevalence: 2.0 / 3.0, ppg: SourceDynamics::ppg_default(), ecg: None, seed: 0 }
    }
}

impl SynthSpec {
    /// PPG class coded by HF depth and ECG class coded by beat-to-beat
    /// alternation, each source carrying the other's cue as noise. A model
    /// fit on ECG then sees no label information in PPG.
    pub fn domain_shift() -> Self {
        let ppg = SourceDynamics { alternans: Cue::coin(0.0, 0.03), ..SourceDynamics::ppg_default() };
        let ecg = SourceDynamics {
            baseline_ibi: 0.75,
            hf_depth: Cue::coin(0.0, 0.06),
            alternans: Cue::coupled(0.03, 0.0),
            scale_max: 9,
            ..SourceDynamics::ppg_default()
        };
        Self { ppg, ecg: Some(ecg), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.beats;
        if lo < 4 || hi < lo {
            return Err(Error::InvalidArgument(format!("beat range must satisfy 4 <= min <= max, got {lo}..={hi}")));
        }
        if !(self.low_prevalence > 0.0 && self.low_prevalence < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "low_prevalence must be in (0, 1), got {}",
                self.low_prevalence
            )));
        }
        for d in std::iter::once(&self.ppg).chain(&self.ecg) {
            if d.n_subjects == 0 || d.samples_per_subject < 2 {
                return Err(Error::InvalidArgument("need at least one subject and two samples per subject".into()));
            }
            if d.scale_max < 3 || d.scale_max % 2 == 0 {
                return Err(Error::InvalidArgument(format!("scale_max must be odd and >= 3, got {}", d.scale_max)));
            }
            if !(d.noise_std >= 0.0 && d.subject_spread >= 0.0 && d.baseline_ibi > 0.0) {
                return Err(Error::InvalidArgument("noise, spread and baseline must be non-negative".into()));
            }
        }
        Ok(())
    }
}

fn report_for(class: BinaryValence, scale_max: i64, rng: &mut impl Rng) -> i64 {
    let mid = (1 + scale_max) / 2;
    match class {
        BinaryValence::Low => rng.random_range(1..mid),
        _ => rng.random_range(mid + 1..=scale_max),
    }
}

fn source_samples(spec: &SynthSpec, d: &SourceDynamics, source: Source, out: &mut Vec<Sample>) -> Result<()> {
    let prefix = match source {
        Source::Ppg => "s",
        Source::Ecg => "e",
    };
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let seed = rng::derive_seed(spec.seed, &format!("synth-{source}"));
    for subj in 0..d.n_subjects {
        let mut r = rng::stream(seed, subj as u64);
        let offset = d.subject_spread * normal.sample(&mut r);
        let n = d.samples_per_subject;
        let n_low = ((n as f64 * spec.low_prevalence).round() as usize).clamp(1, n - 1);
        let mut classes: Vec<BinaryValence> =
            (0..n).map(|i| if i < n_low { BinaryValence::Low } else { BinaryValence::High }).collect();
        classes.shuffle(&mut r);
        for (k, class) in classes.into_iter().enumerate() {
            let beats = r.random_range(spec.beats.0..=spec.beats.1);
            let hf = d.hf_depth.draw(class, &mut r);
            let lf = d.lf_depth.draw(class, &mut r);
            let alt = d.alternans.draw(class, &mut r);
            let (phi, psi) = (r.random_range(0.0..2.0 * PI), r.random_range(0.0..2.0 * PI));
            let mut t = 0.0;
            let mut intervals = Vec::with_capacity(beats);
            for b in 0..beats {
                let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
                let v = d.baseline_ibi
                    + offset
                    + hf * (2.0 * PI * HF_FREQ_HZ * t + phi).sin()
                    + lf * (2.0 * PI * LF_FREQ_HZ * t + psi).sin()
                    + alt * sign
                    + d.noise_std * normal.sample(&mut r);
                let v = v.clamp(IBI_MIN_S + 1e-3, IBI_MAX_S - 1e-3);
                t += v;
                intervals.push(v);
            }
            let raw = report_for(class, d.scale_max, &mut r);
            out.push(Sample {
                series: IbiSeries {
                    subject_id: format!("{prefix}{:02}", subj + 1),
                    stimulus_id: format!("v{:02}", k + 1),
                    source,
                    intervals,
                },
                label: ValenceLabel::new(raw, 1, d.scale_max)?,
            });
        }
    }
    Ok(())
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut samples = Vec::new();
    source_samples(spec, &spec.ppg, Source::Ppg, &mut samples)?;
    if let Some(ecg) = &spec.ecg {
        source_samples(spec, ecg, Source::Ecg, &mut samples)?;
    }
    Dataset::new(samples)
}
