//! Trainable encoder + projection head, contrastive loss, optimizers and the
//! learning-rate schedule.

pub mod loss;
pub mod mlp;
pub mod optim;
pub mod schedule;

pub use loss::{supclr_backward, supclr_loss, ContrastiveBatch, RawBatch};
pub use mlp::{Dense, ModelDims, ModelParams};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use schedule::ScheduleConfig;
