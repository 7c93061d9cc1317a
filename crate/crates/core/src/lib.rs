//! Hyperspherical multi-source open-set domain adaptation engine.
//!
//! The pipeline: embed samples on the unit hypersphere with a small MLP
//! trained by a supervised contrastive loss over class x domain balanced
//! batches, derive class prototypes and a self-paced rejection threshold
//! from the source embedding geometry, and iteratively pseudo-label the
//! unlabeled target domain so it joins the batching as an extra domain.
//!
//! Modules:
//! - [`sphere`]: unit vectors, prototypes, sparsity/compactness, the
//!   self-paced threshold and open-set classification.
//! - [`model`]: MLP encoder/head, contrastive loss with analytic gradients,
//!   LARS/SGD optimizers and the warmup-cosine schedule.
//! - [`data`]: datasets, synthetic multi-domain scenarios, style-transfer
//!   view augmentation, balanced batching and CSV I/O.
//! - [`train`]: the training loop with self-training break-points and
//!   bitwise-reproducible checkpointing.
//! - [`eval`]: open-set metrics (OS*, UNK, OS, HOS, AUROC), embedding
//!   dumps and the cross-entropy rejection baseline.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod sphere;
pub mod train;

pub use error::{Error, Result};
