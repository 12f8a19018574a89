//! Leave-one-subject-out evaluation across training-data regimes.

pub mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use synth::{synth_dataset, Cue, SourceDynamics, SynthSpec};

use crate::dataset::{model_input, select_subjects, BinaryValence, Dataset, Fold, Source};
use crate::error::{Error, Result};
use crate::model::{build_model, train, ModelConfig, TrainExample};
use crate::rng;
use crate::selective::{self, chance_f1, coverage, decide_mass, f1_attempted, mc_predict, DecisionRecord};
use crate::stats::mann_whitney;

pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PpgOnly,
    PpgPlusEcg,
    EcgOnly,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::PpgOnly, Regime::PpgPlusEcg, Regime::EcgOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::PpgOnly => "ppg_only",
            Regime::PpgPlusEcg => "ppg_plus_ecg",
            Regime::EcgOnly => "ecg_only",
        }
    }

    fn trains_on(self, source: Source) -> bool {
        match self {
            Regime::PpgOnly => source == Source::Ppg,
            Regime::PpgPlusEcg => true,
            Regime::EcgOnly => source == Source::Ecg,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown regime {s:?} (ppg_only, ppg_plus_ecg, ecg_only)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub model: ModelConfig,
    pub n_passes: usize,
    pub alpha_grid: Vec<f64>,
    /// Number of held-out subjects; `None` holds out every PPG subject once,
    /// capped at the default of ten.
    pub iterations: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            n_passes: selective::DEFAULT_PASSES,
            alpha_grid: selective::default_alpha_grid(),
            iterations: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_passes == 0 {
            return Err(Error::InvalidArgument("n_passes must be at least 1".into()));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::InvalidArgument("alpha grid is empty".into()));
        }
        self.alpha_grid.iter().try_for_each(|&a| selective::check_alpha(a))?;
        if self.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("alpha grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub mass_above: f64,
    pub truth: BinaryValence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub alpha: f64,
    pub f1: Option<f64>,
    pub coverage: f64,
    pub attempted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub held_out: String,
    pub n_train: usize,
    pub n_test: usize,
    pub input_len: usize,
    pub train_final_loss: f64,
    pub per_alpha: Vec<AlphaRecord>,
    pub samples: Vec<SampleOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub alpha: f64,
    /// Mean and population standard deviation over folds with a defined F1.
    pub mean_f1: Option<f64>,
    pub std_f1: Option<f64>,
    pub f1_folds: usize,
    pub mean_coverage: f64,
    pub std_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub regime: Regime,
    pub seed: u64,
    pub config: EvalConfig,
    pub chance_f1: f64,
    pub n_low: usize,
    pub n_high: usize,
    pub folds: Vec<FoldRecord>,
    pub aggregate: Vec<AggregateRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate rows computed from per-fold records alone.
pub fn aggregate(alpha_grid: &[f64], folds: &[FoldRecord]) -> Vec<AggregateRow> {
    alpha_grid
        .iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let f1s: Vec<f64> = folds.iter().filter_map(|f| f.per_alpha[k].f1).collect();
            let covs: Vec<f64> = folds.iter().map(|f| f.per_alpha[k].coverage).collect();
            let (mean_f1, std_f1) = if f1s.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&f1s);
                (Some(m), Some(s))
            };
            let (mean_coverage, std_coverage) = mean_std(&covs);
            AggregateRow { alpha, mean_f1, std_f1, f1_folds: f1s.len(), mean_coverage, std_coverage }
        })
        .collect()
}

/// Per-α metrics of one fold from its test-sample masses.
pub fn alpha_records(samples: &[SampleOutcome], alpha_grid: &[f64]) -> Result<Vec<AlphaRecord>> {
    let truth: Vec<BinaryValence> = samples.iter().map(|s| s.truth).collect();
    alpha_grid
        .iter()
        .map(|&alpha| {
            let decisions = samples.iter().map(|s| decide_mass(s.mass_above, alpha)).collect::<Result<Vec<_>>>()?;
            Ok(AlphaRecord {
                alpha,
                f1: f1_attempted(&decisions, &truth)?,
                coverage: coverage(&decisions)?,
                attempted: decisions.iter().filter(|d| d.attempted()).count(),
            })
        })
        .collect()
}

/// Folds over PPG subjects. Test sets hold only the held-out subject's PPG
/// samples; training sets take the regime's sources from every other subject.
/// Neutral samples are excluded from both.
pub fn regime_folds(dataset: &Dataset, regime: Regime, iterations: Option<usize>, seed: u64) -> Result<Vec<Fold>> {
    let ppg_subjects: BTreeSet<&str> = dataset
        .samples
        .iter()
        .filter(|s| s.series.source == Source::Ppg)
        .map(|s| s.series.subject_id.as_str())
        .collect();
    if ppg_subjects.is_empty() {
        return Err(Error::Data("evaluation needs PPG samples to test on".into()));
    }
    for source in [Source::Ppg, Source::Ecg] {
        if regime.trains_on(source) && dataset.count_source(source) == 0 {
            return Err(Error::Data(format!("regime {regime} needs {source} samples, found none")));
        }
    }
    let iterations = iterations.unwrap_or(DEFAULT_ITERATIONS.min(ppg_subjects.len()));
    let held_out = select_subjects(&ppg_subjects, iterations, seed)?;
    held_out
        .into_iter()
        .map(|subject| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (i, s) in dataset.samples.iter().enumerate() {
                if s.label.binary() == BinaryValence::Neutral {
                    continue;
                }
                let own = s.series.subject_id == subject;
                if own && s.series.source == Source::Ppg {
                    test.push(i);
                } else if !own && regime.trains_on(s.series.source) {
                    train.push(i);
                }
            }
            if train.is_empty() || test.is_empty() {
                return Err(Error::Data(format!("fold holding out {subject} has an empty train or test set")));
            }
            Ok(Fold { held_out: subject, train, test })
        })
        .collect()
}

/// Longest PPG series among training subjects, so that every regime sees
/// the same input length for a given held-out subject.
fn fold_input_len(dataset: &Dataset, fold: &Fold, min_len: usize) -> usize {
    let ppg_max = dataset
        .samples
        .iter()
        .filter(|s| s.series.source == Source::Ppg && s.series.subject_id != fold.held_out)
        .map(|s| s.series.len())
        .max();
    let any_max = fold.train_samples(dataset).map(|s| s.series.len()).max().unwrap_or(0);
    ppg_max.unwrap_or(any_max).max(min_len)
}

fn run_fold(dataset: &Dataset, fold: &Fold, cfg: &EvalConfig, seed: u64) -> Result<FoldRecord> {
    let fold_seed = rng::derive_seed(seed, &format!("fold-{}", fold.held_out));
    let input_len = fold_input_len(dataset, fold, cfg.model.max_window());
    let examples: Vec<TrainExample> = fold
        .train_samples(dataset)
        .map(|s| TrainExample { input: model_input(&s.series, input_len), target: s.label.normalized() })
        .collect();
    let model_cfg = ModelConfig { seed: fold_seed, ..cfg.model.clone() };
    let mut model = build_model(&model_cfg, input_len)?;
    let report = train(&mut model, &examples)?;

    let samples = fold
        .test_samples(dataset)
        .map(|s| {
            let id = s.id();
            let post =
                mc_predict(&model, &model_input(&s.series, input_len), cfg.n_passes, rng::derive_seed(fold_seed, &id))?;
            Ok(SampleOutcome {
                sample_id: id,
                mass_above: post.mass_above(selective::MIDPOINT),
                truth: s.label.binary(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_alpha = alpha_records(&samples, &cfg.alpha_grid)?;
    log::info!(
        "fold {}: {} train, {} test, loss {:.4}, F1@{} {:?}",
        fold.held_out,
        examples.len(),
        samples.len(),
        report.final_loss,
        cfg.alpha_grid[0],
        per_alpha[0].f1
    );
    Ok(FoldRecord {
        held_out: fold.held_out.clone(),
        n_train: examples.len(),
        n_test: samples.len(),
        input_len,
        train_final_loss: report.final_loss,
        per_alpha,
        samples,
    })
}

pub fn run_loso(dataset: &Dataset, regime: Regime, cfg: &EvalConfig, seed: u64) -> Result<EvalReport> {
    cfg.validate()?;
    let folds = regime_folds(dataset, regime, cfg.iterations, seed)?;
    for f in &folds {
        debug_assert!(f.test_samples(dataset).all(|s| s.series.source == Source::Ppg));
    }
    let records = folds.par_iter().map(|f| run_fold(dataset, f, cfg, seed)).collect::<Result<Vec<_>>>()?;
    let n_low = records.iter().flat_map(|f| &f.samples).filter(|s| s.truth == BinaryValence::Low).count();
    let n_high = records.iter().map(|f| f.samples.len()).sum::<usize>() - n_low;
    Ok(EvalReport {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        regime,
        seed,
        config: cfg.clone(),
        chance_f1: chance_f1(n_low, n_high)?,
        n_low,
        n_high,
        aggregate: aggregate(&cfg.alpha_grid, &records),
        folds: records,
    })
}

impl EvalReport {
    pub fn fold_f1_at(&self, alpha: f64) -> Result<Vec<f64>> {
        let k = self
            .config
            .alpha_grid
            .iter()
            .position(|&a| a == alpha)
            .ok_or_else(|| Error::InvalidArgument(format!("alpha {alpha} is not on the report's grid")))?;
        self.folds
            .iter()
            .map(|f| {
                f.per_alpha[k].f1.ok_or_else(|| Error::Data(format!("fold {} has no F1 at alpha {alpha}", f.held_out)))
            })
            .collect()
    }

    pub fn decision_records(&self) -> Vec<DecisionRecord> {
        let mut out = Vec::new();
        for f in &self.folds {
            for s in &f.samples {
                for &alpha in &self.config.alpha_grid {
                    let d = decide_mass(s.mass_above, alpha).expect("grid validated");
                    out.push(DecisionRecord {
                        sample_id: s.sample_id.clone(),
                        alpha,
                        mass_above: s.mass_above,
                        outcome: d.outcome,
                        truth: s.truth,
                    });
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("invalid report: {e}")))
    }
}

/// Two-sided Mann-Whitney p between the per-fold F1 scores at α = 0.5.
pub fn compare_regimes(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    if a.folds.len() != b.folds.len() || a.folds.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "reports need the same fold count (at least 2), got {} and {}",
            a.folds.len(),
            b.folds.len()
        )));
    }
    Ok(mann_whitney(&a.fold_f1_at(0.5)?, &b.fold_f1_at(0.5)?)?.p_value)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub fn write_f1_curve(report: &EvalReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "alpha\tmean_f1\tstd_f1\tchance_f1")?;
    for r in &report.aggregate {
        writeln!(w, "{}\t{}\t{}\t{}", r.alpha, fmt_opt(r.mean_f1), fmt_opt(r.std_f1), report.chance_f1)?;
    }
    Ok(())
}

pub fn write_coverage_curve(report: &EvalReport, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "alpha\tmean_coverage\tstd_coverage")?;
    for r in &report.aggregate {
        writeln!(w, "{}\t{}\t{}", r.alpha, r.mean_coverage, r.std_coverage)?;
    }
    Ok(())
}

/// Writes `f1_<regime>_seed<seed>.tsv` and `coverage_<regime>_seed<seed>.tsv`.
pub fn emit_curves(report: &EvalReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if report.aggregate.is_empty() {
        return Err(Error::Data("report has no aggregate rows".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = format!("{}_seed{}", report.regime, report.seed);
    let f1_path = out_dir.join(format!("f1_{stem}.tsv"));
    let cov_path = out_dir.join(format!("coverage_{stem}.tsv"));
    let mut buf = Vec::new();
    write_f1_curve(report, &mut buf).expect("write to memory");
    fs::write(&f1_path, &buf).map_err(|e| Error::io(&f1_path, e))?;
    buf.clear();
    write_coverage_curve(report, &mut buf).expect("write to memory");
    fs::write(&cov_path, &buf).map_err(|e| Error::io(&cov_path, e))?;
    Ok(vec![f1_path, cov_path])
}
