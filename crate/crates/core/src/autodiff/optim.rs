use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    rejected: u64,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (m, v) = params.into_iter().map(|p| (vec![0.0; p.len()], vec![0.0; p.len()])).unzip();
        Self { m, v, step: 0, rejected: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Number of updates refused because of non-finite gradients.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Bias-corrected Adam update. Returns `false`, leaving parameters and
    /// state untouched, when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.shape() != p.shape() {
                return Err(Error::Shape(format!("gradient {:?} does not match parameter {:?}", g.shape(), p.shape())));
            }
        }
        if grads.iter().flat_map(|g| g.data()).any(|v| !v.is_finite()) {
            self.rejected += 1;
            log::warn!("non-finite gradient, optimizer step {} rejected", self.step + 1);
            return Ok(false);
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
                *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
                *pv -= lr * (*mv / c1) / ((*vv / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(true)
    }
}

pub const PLATEAU_THRESHOLD: f64 = 1e-6;

/// Halves the learning rate after `patience` epochs without improvement,
/// never going below the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub current_lr: f64,
    pub floor_lr: f64,
    pub patience: usize,
    pub best_loss: f64,
    pub epochs_since_improvement: usize,
}

impl PlateauScheduler {
    pub fn new(initial_lr: f64, floor_lr: f64, patience: usize) -> Self {
        Self {
            current_lr: initial_lr.max(floor_lr),
            floor_lr,
            patience,
            best_loss: f64::INFINITY,
            epochs_since_improvement: 0,
        }
    }

    pub fn step(&mut self, epoch_loss: f64) -> Result<f64> {
        if !epoch_loss.is_finite() {
            return Err(Error::Numerical(format!("scheduler received non-finite loss {epoch_loss}")));
        }
        if epoch_loss < self.best_loss - PLATEAU_THRESHOLD {
            self.best_loss = epoch_loss;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.patience {
                self.current_lr = (self.current_lr / 2.0).max(self.floor_lr);
                self.epochs_since_improvement = 0;
            }
        }
        Ok(self.current_lr)
    }
}
