pub mod checkpoint;
pub mod config;
pub mod network;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta};
pub use config::ModelConfig;
pub use network::{build_model, param_layout, parameter_count, Model};
pub use train::{evaluate_mse, train, TrainExample, TrainReport};
