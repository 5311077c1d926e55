//! CARE-GNN: a camouflage-resistant graph neural network for fraud detection
//! on multi-relation graphs.
//!
//! The model combines three pieces: a label-aware similarity measure trained
//! directly against node labels, a per-relation top-p neighbor filter whose
//! thresholds are steered by a Bernoulli multi-armed bandit, and a
//! relation-aware aggregator that fuses the filtered neighborhoods into node
//! embeddings for a binary suspiciousness classifier.

pub mod aggregation;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod selector;
pub mod similarity;
pub mod trainer;

pub use error::{Error, Result};
