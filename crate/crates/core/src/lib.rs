//! Heartbeat-interval affect estimation: IBI datasets, ECG beat extraction,
//! HRV features, source comparison statistics, a small reverse-mode
//! autodiff engine, the convolutional/recurrent valence model, Monte Carlo
//! dropout with selective prediction, and leave-one-subject-out evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod config;
pub mod dataset;
pub mod ecg;
pub mod error;
pub mod eval;
pub mod hrv;
pub mod model;
pub mod rng;
pub mod selective;
pub mod stats;

pub use error::{Error, ErrorKind, Result};
