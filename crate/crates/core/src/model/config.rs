use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv_filters: usize,
    /// One entry per convolutional layer.
    pub conv_windows: Vec<usize>,
    pub conv_dropout: f64,
    /// Hidden units per LSTM direction.
    pub lstm_hidden: usize,
    pub lstm_dropout: f64,
    pub epochs: usize,
    pub initial_lr: f64,
    pub lr_floor: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            conv_filters: 128,
            conv_windows: vec![8, 6, 4, 2],
            conv_dropout: 0.5,
            lstm_hidden: 32,
            lstm_dropout: 0.8,
            epochs: 1000,
            initial_lr: 1e-3,
            lr_floor: 1e-4,
            patience: 100,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn conv_layers(&self) -> usize {
        self.conv_windows.len()
    }

    /// Width of the vector entering the output layer.
    pub fn concat_dim(&self) -> usize {
        self.conv_filters + 2 * self.lstm_hidden
    }

    pub fn max_window(&self) -> usize {
        self.conv_windows.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.conv_windows.is_empty() || self.conv_windows.contains(&0) {
            return bad(format!("conv_windows must be non-empty and positive, got {:?}", self.conv_windows));
        }
        if self.conv_windows.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("conv_windows must be strictly decreasing, got {:?}", self.conv_windows));
        }
        if self.conv_filters == 0 || self.lstm_hidden == 0 {
            return bad("conv_filters and lstm_hidden must be positive".into());
        }
        for (name, rate) in [("conv_dropout", self.conv_dropout), ("lstm_dropout", self.lstm_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1), got {rate}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch_size and patience must be positive".into());
        }
        if !(self.lr_floor > 0.0 && self.initial_lr >= self.lr_floor && self.initial_lr.is_finite()) {
            return bad(format!("need 0 < lr_floor <= initial_lr, got {} and {}", self.lr_floor, self.initial_lr));
        }
        Ok(())
    }

    /// Same configuration with every dropout rate set to zero.
    pub fn without_dropout(&self) -> Self {
        Self { conv_dropout: 0.0, lstm_dropout: 0.0, ..self.clone() }
    }
}
