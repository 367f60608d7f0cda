//! Hierarchy-aware multi-label activity classification.
//!
//! A label encoder runs a graph convolution over a fixed ancestor-overlap
//! graph and a learned adaptive graph; a data encoder expands feature vectors
//! onto the label-node axis and propagates them over the same graphs. Training
//! combines an alignment loss between the two embeddings, a margin
//! contrastive loss and a flat multi-label cross-entropy.
//!
//! Everything differentiable runs on the small reverse-mode kernel in
//! [`diffcore`].

pub mod checkpoint;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod model;
pub mod objectives;

pub use data::{generate_synthetic, Dataset, Split, SyntheticSpec};
pub use error::{Error, Result};
pub use hierarchy::{GraphPair, LabelHierarchy};
pub use model::{GraphMode, Model, ModelConfig, PredictMode, Widths};
pub use objectives::{train, LossTerms, LossWeights, TrainConfig};
pub use harness::{evaluate, Metrics, Report, Variant};
