//! Learned performance model: an encoder/core/decoder graph network.
//!
//! The encoder and decoder apply small MLPs independently to edge, node
//! and global features; the core performs full message-passing rounds
//! (edge update, node update, global update with sum aggregation). The
//! decoded global feature after each round is a scalar prediction, and
//! the training loss averages the squared error over every round.
//! Gradients are exact reverse-mode derivatives of this computation,
//! implemented by hand so the model has no framework dependencies.

mod block;
mod features;
mod mlp;
mod model;
mod train;

pub use block::{gn_block, BlockTriplet};
pub use features::{encode_cell, EdgeFeature, GraphFeatures};
pub use mlp::{Matrix, MlpBlock};
pub use model::{loss, GraphNetModel, LATENT_WIDTH};
pub use train::{
    evaluate_model, split_sizes, train, Checkpoint, EvalMetrics, TargetNormalization,
    TrainConfig, TrainOutcome,
};
