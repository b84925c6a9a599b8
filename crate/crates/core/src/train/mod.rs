//! Optimization, checkpoints and the experiment drivers.

pub mod adam;
pub mod alloc;
pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod gradcheck;
pub mod parallel;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::RunConfig;
pub use experiments::{ablate, evaluate, fuse, jitter_test, scale_sweep, AblationMode, EvalSource};
pub use gradcheck::model_grad_check;
pub use trainer::{batch_gradient, read_summary, train, train_from, train_on, validate, StopReason, TrainSummary};
