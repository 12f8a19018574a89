//! Domain types, the line-record dataset format, and model-side preprocessing.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Physiologically plausible inter-beat interval range in seconds (exclusive).
pub const IBI_MIN_S: f64 = 0.2;
pub const IBI_MAX_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Ecg,
    Ppg,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Ecg => "ecg",
            Source::Ppg => "ppg",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inter-beat intervals (seconds) recorded for one subject watching one stimulus.
#[derive(Debug, Clone, PartialEq)]
pub struct IbiSeries {
    pub subject_id: String,
    pub stimulus_id: String,
    pub source: Source,
    pub intervals: Vec<f64>,
}

impl IbiSeries {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Checks the ingestion bounds: non-empty, every interval finite and
    /// inside `(IBI_MIN_S, IBI_MAX_S)`.
    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::Data("empty interval list".into()));
        }
        for (i, &v) in self.intervals.iter().enumerate() {
            if !v.is_finite() || v <= IBI_MIN_S || v >= IBI_MAX_S {
                return Err(Error::Data(format!("interval {i} = {v} s outside ({IBI_MIN_S}, {IBI_MAX_S})")));
            }
        }
        Ok(())
    }

    /// Beat times reconstructed as cumulative sums of the intervals; the first
    /// beat closes the first interval.
    pub fn beat_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.intervals
            .iter()
            .map(|&v| {
                t += v;
                t
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryValence {
    Low,
    High,
    Neutral,
}

impl fmt::Display for BinaryValence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryValence::Low => "low",
            BinaryValence::High => "high",
            BinaryValence::Neutral => "neutral",
        })
    }
}

/// A valence self-report on an integer scale such as 1..=5 or 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValenceLabel {
    pub raw_report: i64,
    pub scale_min: i64,
    pub scale_max: i64,
}

impl ValenceLabel {
    pub fn new(raw_report: i64, scale_min: i64, scale_max: i64) -> Result<Self> {
        if scale_min >= scale_max {
            return Err(Error::Data(format!("scale_min {scale_min} must be below scale_max {scale_max}")));
        }
        if raw_report < scale_min || raw_report > scale_max {
            return Err(Error::Data(format!("raw_report {raw_report} outside scale [{scale_min}, {scale_max}]")));
        }
        Ok(Self { raw_report, scale_min, scale_max })
    }

    /// Position on the scale mapped to `[0, 1]`.
    pub fn normalized(&self) -> f64 {
        (self.raw_report - self.scale_min) as f64 / (self.scale_max - self.scale_min) as f64
    }

    pub fn binary(&self) -> BinaryValence {
        binary_from_normalized(self.normalized())
    }
}

pub fn binary_from_normalized(normalized: f64) -> BinaryValence {
    if normalized < 0.5 {
        BinaryValence::Low
    } else if normalized > 0.5 {
        BinaryValence::High
    } else {
        BinaryValence::Neutral
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub series: IbiSeries,
    pub label: ValenceLabel,
}

impl Sample {
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.series.subject_id, self.series.stimulus_id, self.series.source)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Longest interval count among the samples.
    pub max_train_length: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let max_train_length = samples.iter().map(|s| s.series.len()).max().unwrap_or(0);
        Ok(Self { samples, max_train_length })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.series.subject_id.as_str()).collect()
    }

    pub fn count_source(&self, source: Source) -> usize {
        self.samples.iter().filter(|s| s.series.source == source).count()
    }
}

/// One line of the dataset file. Key names are part of the file format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IbiRecord {
    subject_id: String,
    stimulus_id: String,
    source: Source,
    raw_report: i64,
    scale_min: i64,
    scale_max: i64,
    ibi_seconds: Vec<f64>,
}

impl IbiRecord {
    fn into_sample(self) -> Result<Sample> {
        let label = ValenceLabel::new(self.raw_report, self.scale_min, self.scale_max)?;
        let series = IbiSeries {
            subject_id: self.subject_id,
            stimulus_id: self.stimulus_id,
            source: self.source,
            intervals: self.ibi_seconds,
        };
        series.validate()?;
        Ok(Sample { series, label })
    }

    fn from_sample(s: &Sample) -> Self {
        Self {
            subject_id: s.series.subject_id.clone(),
            stimulus_id: s.series.stimulus_id.clone(),
            source: s.series.source,
            raw_report: s.label.raw_report,
            scale_min: s.label.scale_min,
            scale_max: s.label.scale_max,
            ibi_seconds: s.series.intervals.clone(),
        }
    }
}

/// Parses a dataset from any reader; blank lines are ignored.
pub fn parse_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Record { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: IbiRecord =
            serde_json::from_str(&line).map_err(|e| Error::Record { line: line_no, message: e.to_string() })?;
        let sample = record.into_sample().map_err(|e| Error::Record { line: line_no, message: e.to_string() })?;
        samples.push(sample);
    }
    Dataset::new(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file))
}

pub fn write_dataset(dataset: &Dataset, mut writer: impl Write) -> std::io::Result<()> {
    for s in &dataset.samples {
        let line = serde_json::to_string(&IbiRecord::from_sample(s)).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Z-score with population standard deviation. Series whose spread is at
/// rounding level map to all zeros.
pub fn z_normalize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= 1e-12 * mean.abs().max(1.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Trailing zero padding, or truncation keeping the head of the sequence.
pub fn pad_or_cut(values: &[f64], target_len: usize) -> Vec<f64> {
    let mut out: Vec<f64> = values.iter().copied().take(target_len).collect();
    out.resize(target_len, 0.0);
    out
}

/// The network input for one series: z-normalized, then padded or cut.
pub fn model_input(series: &IbiSeries, target_len: usize) -> Vec<f64> {
    pad_or_cut(&z_normalize(&series.intervals), target_len)
}

/// A leave-one-subject-out split, as indices into the dataset's samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub held_out: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    pub fn train_samples<'a>(&'a self, dataset: &'a Dataset) -> impl Iterator<Item = &'a Sample> + 'a {
        self.train.iter().map(move |&i| &dataset.samples[i])
    }

    pub fn test_samples<'a>(&'a self, dataset: &'a Dataset) -> impl Iterator<Item = &'a Sample> + 'a {
        self.test.iter().map(move |&i| &dataset.samples[i])
    }
}

/// Draws `iterations` distinct subjects (sorted order, then seeded shuffle).
pub fn select_subjects(subjects: &BTreeSet<&str>, iterations: usize, seed: u64) -> Result<Vec<String>> {
    if subjects.len() < 2 {
        return Err(Error::Data(format!("need at least 2 subjects, found {}", subjects.len())));
    }
    if iterations == 0 || iterations > subjects.len() {
        return Err(Error::InvalidArgument(format!(
            "iterations must be in 1..={} (number of subjects), got {iterations}",
            subjects.len()
        )));
    }
    let mut pool: Vec<&str> = subjects.iter().copied().collect();
    let mut rng = rng::stream(rng::derive_seed(seed, "loso"), 0);
    pool.shuffle(&mut rng);
    Ok(pool.into_iter().take(iterations).map(str::to_owned).collect())
}

/// Leave-one-subject-out folds. Neutral samples are excluded from both sides.
pub fn loso_folds(dataset: &Dataset, iterations: usize, seed: u64) -> Result<Vec<Fold>> {
    let held_out = select_subjects(&dataset.subjects(), iterations, seed)?;
    Ok(held_out
        .into_iter()
        .map(|subject| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (i, s) in dataset.samples.iter().enumerate() {
                if s.label.binary() == BinaryValence::Neutral {
                    continue;
                }
                if s.series.subject_id == subject {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            Fold { held_out: subject, train, test }
        })
        .collect())
}
