//! The 11-feature HRV battery computed per IBI series.

pub mod entropy;
pub mod spectral;
pub mod time;

use std::io::Write;

use serde::Serialize;

use crate::dataset::{Dataset, IbiSeries, Source};
use crate::error::Result;

pub use entropy::{multiscale_entropy, sample_entropy, MultiscaleEntropy};
pub use spectral::{lomb_scargle_power, HF_BAND, LF_BAND, VLF_BAND};
pub use time::{time_features, TimeFeatures};

pub const FEATURE_NAMES: [&str; 11] = [
    "hf_power",
    "lf_power",
    "vlf_power",
    "lf_hf_ratio",
    "mean",
    "median",
    "sdsd",
    "nn20",
    "pnn20",
    "rmssd",
    "multiscale_entropy",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureVector {
    pub hf_power: f64,
    pub lf_power: f64,
    pub vlf_power: f64,
    pub lf_hf_ratio: f64,
    pub mean: f64,
    pub median: f64,
    pub sdsd: f64,
    pub nn20: f64,
    pub pnn20: f64,
    pub rmssd: f64,
    pub multiscale_entropy: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 11] {
        [
            self.hf_power,
            self.lf_power,
            self.vlf_power,
            self.lf_hf_ratio,
            self.mean,
            self.median,
            self.sdsd,
            self.nn20,
            self.pnn20,
            self.rmssd,
            self.multiscale_entropy,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// All features of one series. Computed on raw seconds, never on the
/// normalized model input.
pub fn compute_features(series: &IbiSeries) -> Result<FeatureVector> {
    let x = &series.intervals;
    let t = time_features(x)?;
    let hf = spectral::band_power(x, HF_BAND)?;
    let lf = spectral::band_power(x, LF_BAND)?;
    let vlf = spectral::band_power(x, VLF_BAND)?;
    let mse = multiscale_entropy(x)?;
    Ok(FeatureVector {
        hf_power: hf,
        lf_power: lf,
        vlf_power: vlf,
        lf_hf_ratio: if hf > 0.0 { lf / hf } else { f64::NAN },
        mean: t.mean,
        median: t.median,
        sdsd: t.sdsd,
        nn20: t.nn20 as f64,
        pnn20: t.pnn20,
        rmssd: t.rmssd,
        multiscale_entropy: mse.value,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub subject_id: String,
    pub stimulus_id: String,
    pub source: Source,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    /// `(sample index, reason)` for samples that failed a precondition.
    pub skipped: Vec<(usize, String)>,
}

impl FeatureTable {
    pub fn source_rows(&self, source: Source) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(move |r| r.source == source)
    }

    /// One column across the rows of one source.
    pub fn column(&self, source: Source, feature: usize) -> Vec<f64> {
        self.source_rows(source).map(|r| r.features.to_array()[feature]).collect()
    }

    /// Tab-separated: `subject_id`, `source`, then the features in order.
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "subject_id\tsource\t{}", FEATURE_NAMES.join("\t"))?;
        for r in &self.rows {
            let values: Vec<String> = r.features.to_array().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}\t{}\t{}", r.subject_id, r.source, values.join("\t"))?;
        }
        Ok(())
    }
}

pub fn feature_matrix(dataset: &Dataset) -> FeatureTable {
    let mut table = FeatureTable::default();
    for (i, s) in dataset.samples.iter().enumerate() {
        match compute_features(&s.series) {
            Ok(f) if f.is_finite() => table.rows.push(FeatureRow {
                subject_id: s.series.subject_id.clone(),
                stimulus_id: s.series.stimulus_id.clone(),
                source: s.series.source,
                features: f,
            }),
            Ok(_) => {
                log::warn!("sample {i} ({}): non-finite feature, skipped", s.id());
                table.skipped.push((i, "non-finite feature value".into()));
            }
            Err(e) => {
                log::warn!("sample {i} ({}): {e}, skipped", s.id());
                table.skipped.push((i, e.to_string()));
            }
        }
    }
    table
}
