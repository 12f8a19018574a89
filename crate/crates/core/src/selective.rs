//! Monte Carlo dropout inference and the α-confidence selective decision rule.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryValence;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng;

pub const DEFAULT_PASSES: usize = 1000;
/// Midpoint of the normalized valence scale.
pub const MIDPOINT: f64 = 0.5;

/// `{0.5, 0.55, ..., 0.95}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictivePosterior {
    pub samples: Vec<f64>,
}

impl PredictivePosterior {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("posterior needs at least one sample".into()));
        }
        Ok(Self { samples })
    }

    pub fn n_passes(&self) -> usize {
        self.samples.len()
    }

    /// Fraction strictly above `midpoint` plus half the fraction equal to it.
    pub fn mass_above(&self, midpoint: f64) -> f64 {
        let (mut above, mut at) = (0usize, 0usize);
        for &s in &self.samples {
            if s > midpoint {
                above += 1;
            } else if s == midpoint {
                at += 1;
            }
        }
        (2 * above + at) as f64 / (2 * self.samples.len()) as f64
    }
}

/// `n` stochastic passes with dropout active, pass `k` drawing its masks from
/// stream `k` of a seed derived from `seed`.
pub fn mc_predict(model: &Model, input: &[f64], n: usize, seed: u64) -> Result<PredictivePosterior> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of passes must be at least 1".into()));
    }
    let base = rng::derive_seed(seed, "mc-dropout");
    let samples = (0..n)
        .into_par_iter()
        .map(|k| model.predict_stochastic(input, &mut rng::stream(base, k as u64)))
        .collect::<Result<Vec<f64>>>()?;
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite prediction in MC pass".into()));
    }
    PredictivePosterior::new(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    High,
    Low,
    Abstain,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::High => "high",
            Outcome::Low => "low",
            Outcome::Abstain => "abstain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub outcome: Outcome,
    pub alpha: f64,
    pub mass_above: f64,
}

impl Decision {
    pub fn attempted(&self) -> bool {
        self.outcome != Outcome::Abstain
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if (0.5..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must be in [0.5, 1], got {alpha}")))
    }
}

/// Decides from the mass above the midpoint alone.
pub fn decide_mass(mass_above: f64, alpha: f64) -> Result<Decision> {
    check_alpha(alpha)?;
    let outcome = if mass_above >= alpha {
        Outcome::High
    } else if 1.0 - mass_above >= alpha {
        Outcome::Low
    } else {
        Outcome::Abstain
    };
    Ok(Decision { outcome, alpha, mass_above })
}

pub fn decide(posterior: &PredictivePosterior, alpha: f64, midpoint: f64) -> Result<Decision> {
    decide_mass(posterior.mass_above(midpoint), alpha)
}

pub fn coverage(decisions: &[Decision]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(Error::InvalidArgument("coverage of an empty decision list".into()));
    }
    Ok(decisions.iter().filter(|d| d.attempted()).count() as f64 / decisions.len() as f64)
}

/// F1 over attempted cases with Low valence as the positive class. `None`
/// when nothing was attempted.
pub fn f1_attempted(decisions: &[Decision], truth: &[BinaryValence]) -> Result<Option<f64>> {
    if decisions.len() != truth.len() {
        return Err(Error::InvalidArgument(format!("{} decisions but {} labels", decisions.len(), truth.len())));
    }
    let (mut tp, mut fp, mut fneg, mut attempted) = (0usize, 0usize, 0usize, 0usize);
    for (d, t) in decisions.iter().zip(truth) {
        if !d.attempted() {
            continue;
        }
        attempted += 1;
        match (d.outcome == Outcome::Low, *t == BinaryValence::Low) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if attempted == 0 {
        return Ok(None);
    }
    if tp == 0 {
        return Ok(Some(0.0));
    }
    Ok(Some(2.0 * tp as f64 / (2 * tp + fp + fneg) as f64))
}

/// Expected F1 of a classifier guessing each class with probability 1/2,
/// given the Low and High counts: `2 p (1/2) / (p + 1/2)` with `p` the Low
/// prevalence.
pub fn chance_f1(n_low: usize, n_high: usize) -> Result<f64> {
    let n = n_low + n_high;
    if n == 0 {
        return Err(Error::InvalidArgument("chance F1 needs at least one sample".into()));
    }
    let p = n_low as f64 / n as f64;
    Ok(p / (p + 0.5))
}

/// One row of a decision dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub sample_id: String,
    pub alpha: f64,
    pub mass_above: f64,
    pub outcome: Outcome,
    pub truth: BinaryValence,
}

pub fn write_decisions(records: &[DecisionRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "sample_id\talpha\tmass_above\toutcome\ttrue_label")?;
    for r in records {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", r.sample_id, r.alpha, r.mass_above, r.outcome, r.truth)?;
    }
    Ok(())
}
