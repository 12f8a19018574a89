//! The two-stream valence regressor.
//!
//! A convolutional stream (conv, dropout, ReLU per layer, then a mean over
//! time) and a bidirectional LSTM stream (followed by dropout) both read the
//! same `[L, 1]` sequence; their outputs are concatenated and mapped to one
//! scalar by a dense layer.

use rand::Rng;

use super::config::ModelConfig;
use crate::autodiff::{bilstm, init, LstmVars, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub input_len: usize,
    pub params: Vec<Tensor>,
}

/// Names and shapes of every parameter tensor, in storage order.
pub fn param_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (f, h) = (config.conv_filters, config.lstm_hidden);
    let mut layout = Vec::new();
    for (k, &w) in config.conv_windows.iter().enumerate() {
        let c_in = if k == 0 { 1 } else { f };
        layout.push((format!("conv{k}.kernel"), vec![w, c_in, f]));
        layout.push((format!("conv{k}.bias"), vec![f]));
    }
    for dir in ["forward", "backward"] {
        layout.push((format!("lstm.{dir}.wx"), vec![1, 4 * h]));
        layout.push((format!("lstm.{dir}.wh"), vec![h, 4 * h]));
        layout.push((format!("lstm.{dir}.bias"), vec![4 * h]));
    }
    layout.push(("dense.weight".into(), vec![config.concat_dim(), 1]));
    layout.push(("dense.bias".into(), vec![1]));
    layout
}

/// Seeds the per-layer initializers and the dropout masks of one forward pass.
pub fn init_rng(seed: u64) -> StreamRng {
    rng::stream(rng::derive_seed(seed, "init"), 0)
}

pub fn build_model(config: &ModelConfig, input_len: usize) -> Result<Model> {
    config.validate()?;
    if input_len < config.max_window() {
        return Err(Error::InvalidArgument(format!(
            "input length {input_len} is shorter than the widest convolution window {}",
            config.max_window()
        )));
    }
    let mut rng = init_rng(config.seed);
    let h = config.lstm_hidden;
    let params = param_layout(config)
        .into_iter()
        .map(|(name, shape)| match name.rsplit('.').next().unwrap() {
            "kernel" => he_kernel(&shape, &mut rng),
            "bias" if name.starts_with("lstm") => lstm_bias(h),
            "bias" => Tensor::zeros(&shape),
            "wx" => init::glorot_uniform(&shape, shape[0], shape[1], &mut rng),
            "wh" => init::orthogonal(shape[0], shape[1], &mut rng),
            "weight" => init::glorot_uniform(&shape, shape[0], shape[1], &mut rng),
            other => unreachable!("unknown parameter kind {other}"),
        })
        .collect();
    Ok(Model { config: config.clone(), input_len, params })
}

fn he_kernel(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    init::he_normal(shape, shape[0] * shape[1], rng)
}

/// Zero except a forget-gate bias of one.
fn lstm_bias(h: usize) -> Tensor {
    let mut b = Tensor::zeros(&[4 * h]);
    b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
    b
}

/// Closed-form parameter count.
pub fn parameter_count(config: &ModelConfig) -> usize {
    let (f, h) = (config.conv_filters, config.lstm_hidden);
    let conv: usize = config.conv_windows.iter().enumerate().map(|(k, w)| w * if k == 0 { 1 } else { f } * f + f).sum();
    let lstm = 2 * (4 * h + h * 4 * h + 4 * h);
    conv + lstm + config.concat_dim() + 1
}

/// Intermediate handles of one forward pass.
pub struct Forward {
    pub output: Var,
    pub concat: Var,
}

impl Model {
    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param_shapes(&self) -> Vec<&[usize]> {
        self.params.iter().map(Tensor::shape).collect()
    }

    /// Records one pass on `tape`. Dropout is applied when `dropout_rng` is
    /// given and skipped otherwise.
    pub fn forward<'p>(
        &'p self,
        tape: &mut Tape<'p>,
        input: &[f64],
        dropout_rng: Option<&mut StreamRng>,
    ) -> Result<Forward> {
        if input.len() != self.input_len {
            return Err(Error::Shape(format!("model expects {} steps, got {}", self.input_len, input.len())));
        }
        let vars: Vec<Var> = self.params.iter().enumerate().map(|(i, p)| tape.param(i, p)).collect();
        self.forward_with(tape, &vars, input, dropout_rng)
    }

    /// Like [`Model::forward`] with caller-supplied parameter nodes, in
    /// [`param_layout`] order.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        input: &[f64],
        mut dropout_rng: Option<&mut StreamRng>,
    ) -> Result<Forward> {
        let c = &self.config;
        let x = tape.input(Tensor::new(vec![input.len(), 1], input.to_vec())?);
        let mut drop = |tape: &mut Tape, v: Var, rate: f64| match dropout_rng.as_deref_mut() {
            Some(r) => tape.dropout(v, rate, r),
            None => Ok(v),
        };

        let mut h = x;
        for k in 0..c.conv_layers() {
            h = tape.conv1d(h, vars[2 * k], vars[2 * k + 1])?;
            h = drop(tape, h, c.conv_dropout)?;
            h = tape.relu(h);
        }
        let conv_out = tape.mean_time(h)?;

        let base = 2 * c.conv_layers();
        let fwd = LstmVars { wx: vars[base], wh: vars[base + 1], b: vars[base + 2] };
        let bwd = LstmVars { wx: vars[base + 3], wh: vars[base + 4], b: vars[base + 5] };
        let lstm_out = bilstm(tape, x, &fwd, &bwd)?;
        let lstm_out = drop(tape, lstm_out, c.lstm_dropout)?;

        let concat = tape.concat(&[conv_out, lstm_out])?;
        let output = tape.dense(concat, vars[base + 6], Some(vars[base + 7]))?;
        Ok(Forward { output, concat })
    }

    /// Deterministic prediction with dropout off.
    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, input, None)?;
        Ok(tape.value(f.output).data()[0])
    }

    /// One stochastic pass with dropout masks drawn from `rng`.
    pub fn predict_stochastic(&self, input: &[f64], rng: &mut StreamRng) -> Result<f64> {
        let mut tape = Tape::new();
        let f = self.forward(&mut tape, input, Some(rng))?;
        Ok(tape.value(f.output).data()[0])
    }
}
