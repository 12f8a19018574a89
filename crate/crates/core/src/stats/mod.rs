//! ECG versus PPG comparison of HRV features: per-feature Mann-Whitney tests
//! and a cross-validated SVM source classifier.

pub mod mann_whitney;
pub mod svm;

use std::io::Write;

use serde::Serialize;

pub use mann_whitney::{mann_whitney, MannWhitneyResult};
pub use svm::{kfold_accuracy, smo_solve, svm_predict, svm_train, SvmModel};

use crate::dataset::Source;
use crate::error::{Error, Result};
use crate::hrv::{FeatureTable, FEATURE_NAMES};

pub const SIGNIFICANCE_LEVEL: f64 = 0.001;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureComparison {
    pub feature: String,
    pub u_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub n_ecg: usize,
    pub n_ppg: usize,
    pub features: Vec<FeatureComparison>,
    pub svm_folds: usize,
    pub svm_accuracy: f64,
}

impl StatsReport {
    pub fn write_tsv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "feature\tu_statistic\tp_value\tsignificant")?;
        for f in &self.features {
            writeln!(w, "{}\t{}\t{:e}\t{}", f.feature, f.u_statistic, f.p_value, f.significant)?;
        }
        writeln!(w, "svm_kfold_accuracy\t\t{}\t", self.svm_accuracy)
    }
}

/// Compares ECG-derived against PPG-derived feature rows. The SVM treats ECG
/// as the positive class.
pub fn compare_sources(table: &FeatureTable, folds: usize, seed: u64) -> Result<StatsReport> {
    let n_ecg = table.source_rows(Source::Ecg).count();
    let n_ppg = table.source_rows(Source::Ppg).count();
    if n_ecg == 0 || n_ppg == 0 {
        return Err(Error::Data(format!("need rows from both sources, got {n_ecg} ECG and {n_ppg} PPG")));
    }
    let features = FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(idx, name)| {
            let r = mann_whitney(&table.column(Source::Ecg, idx), &table.column(Source::Ppg, idx))?;
            Ok(FeatureComparison {
                feature: name.to_string(),
                u_statistic: r.u_statistic,
                p_value: r.p_value,
                significant: r.p_value < SIGNIFICANCE_LEVEL,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<Vec<f64>> = table.rows.iter().map(|r| r.features.to_array().to_vec()).collect();
    let labels: Vec<bool> = table.rows.iter().map(|r| r.source == Source::Ecg).collect();
    let svm_accuracy = kfold_accuracy(&rows, &labels, folds, seed, svm::DEFAULT_C)?;
    Ok(StatsReport { n_ecg, n_ppg, features, svm_folds: folds, svm_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrv::{FeatureRow, FeatureVector};

    fn row(source: Source, base: f64) -> FeatureRow {
        let v = base;
        FeatureRow {
            subject_id: "s".into(),
            stimulus_id: "x".into(),
            source,
            features: FeatureVector {
                mean: v,
                median: v,
                sdsd: v,
                nn20: v,
                pnn20: v,
                rmssd: v,
                lf_power: v,
                hf_power: v,
                lf_hf_ratio: v,
                vlf_power: v,
                multiscale_entropy: v,
            },
        }
    }

    #[test]
    fn separated_sources_are_significant_and_classified() {
        let mut table = FeatureTable::default();
        for i in 0..20 {
            table.rows.push(row(Source::Ecg, 10.0 + i as f64 * 0.1));
            table.rows.push(row(Source::Ppg, i as f64 * 0.1));
        }
        let report = compare_sources(&table, 5, 0).unwrap();
        assert_eq!((report.n_ecg, report.n_ppg), (20, 20));
        assert!(report.features.iter().all(|f| f.significant && f.u_statistic == 400.0));
        assert_eq!(report.svm_accuracy, 1.0);
        let mut buf = Vec::new();
        report.write_tsv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    #[test]
    fn single_source_is_rejected() {
        let table = FeatureTable { rows: vec![row(Source::Ppg, 1.0)], skipped: vec![] };
        assert!(compare_sources(&table, 2, 0).is_err());
    }
}
