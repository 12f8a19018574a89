//! Run configuration: command-line overrides over a TOML file over the
//! `PULSE_AFFECT_SEED` environment variable over built-in defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalConfig, Regime};
use crate::model::ModelConfig;
use crate::selective;

pub const SEED_ENV: &str = "PULSE_AFFECT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub n_passes: usize,
    pub alpha_grid: Vec<f64>,
    pub regime: Regime,
    pub iterations: Option<usize>,
    pub jobs: Option<usize>,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_passes: selective::DEFAULT_PASSES,
            alpha_grid: selective::default_alpha_grid(),
            regime: Regime::PpgOnly,
            iterations: None,
            jobs: None,
            model: ModelConfig::default(),
        }
    }
}

/// Optional settings, as read from a config file or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_passes: Option<usize>,
    pub alpha_grid: Option<Vec<f64>>,
    pub regime: Option<Regime>,
    pub iterations: Option<usize>,
    pub jobs: Option<usize>,
    pub model: ModelOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOverrides {
    pub conv_filters: Option<usize>,
    pub conv_windows: Option<Vec<usize>>,
    pub conv_dropout: Option<f64>,
    pub lstm_hidden: Option<usize>,
    pub lstm_dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub initial_lr: Option<f64>,
    pub lr_floor: Option<f64>,
    pub patience: Option<usize>,
    pub batch_size: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    fn apply(&mut self, o: Overrides) {
        set(&mut self.seed, o.seed);
        set(&mut self.n_passes, o.n_passes);
        set(&mut self.alpha_grid, o.alpha_grid);
        set(&mut self.regime, o.regime);
        if o.iterations.is_some() {
            self.iterations = o.iterations;
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        let m = &mut self.model;
        let mo = o.model;
        set(&mut m.conv_filters, mo.conv_filters);
        set(&mut m.conv_windows, mo.conv_windows);
        set(&mut m.conv_dropout, mo.conv_dropout);
        set(&mut m.lstm_hidden, mo.lstm_hidden);
        set(&mut m.lstm_dropout, mo.lstm_dropout);
        set(&mut m.epochs, mo.epochs);
        set(&mut m.initial_lr, mo.initial_lr);
        set(&mut m.lr_floor, mo.lr_floor);
        set(&mut m.patience, mo.patience);
        set(&mut m.batch_size, mo.batch_size);
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            model: self.model.clone(),
            n_passes: self.n_passes,
            alpha_grid: self.alpha_grid.clone(),
            iterations: self.iterations,
        }
    }

    /// Model configuration seeded with the run seed.
    pub fn seeded_model(&self) -> ModelConfig {
        ModelConfig { seed: self.seed, ..self.model.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.eval_config().validate()?;
        if self.jobs == Some(0) || self.iterations == Some(0) {
            return Err(Error::InvalidArgument("jobs and iterations must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_config_file(text: &str) -> Result<Overrides> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<Overrides> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_file(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_seed_env(value: &str) -> Result<u64> {
    value.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {value:?}")))
}

/// Parses `0.5,0.6,0.7` or `0.5:0.95:0.05` (start, stop inclusive, step).
pub fn parse_alpha_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("cannot parse alpha grid {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else { return Err(bad()) };
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Rounded to 12 decimals.
        (0..=n).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<f64>>>()?
    };
    grid.iter().try_for_each(|&a| selective::check_alpha(a))?;
    Ok(grid)
}

/// Applies the layers in increasing precedence: defaults, environment seed,
/// config file, flags.
pub fn resolve(flags: Overrides, file: Option<Overrides>, env_seed: Option<&str>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(v) = env_seed {
        cfg.seed = parse_seed_env(v)?;
    }
    if let Some(f) = file {
        cfg.apply(f);
    }
    cfg.apply(flags);
    cfg.validate()?;
    Ok(cfg)
}
