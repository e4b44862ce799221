//! Two-layer message-passing node classifier with hand-derived gradients.
//!
//! Each layer aggregates over one-hop neighbours and applies a linear map:
//! GCN uses the symmetric-normalised `A + I` operator, GraphSAGE-mean
//! concatenates a node's own features with the neighbour mean. Layer one is
//! followed by ReLU and inverted dropout; layer two produces class logits.

mod adam;
mod model;
mod operator;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub(crate) use adam::adam_update;
pub use model::{
    forward, loss_and_grad, ForwardCache, GcnModel, GradientPair, GraphInput,
};
pub use operator::{normalized_adjacency, SparseOperator};
pub use train::{
    evaluate, metrics_from_logits, predict, train_epochs, EpochRecord, TrainMetrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    Gcn,
    SageMean,
}

impl Backbone {
    pub fn tag(self) -> u8 {
        match self {
            Backbone::Gcn => 0,
            Backbone::SageMean => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Backbone::Gcn),
            1 => Some(Backbone::SageMean),
            _ => None,
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Gcn => "gcn",
            Backbone::SageMean => "sage",
        })
    }
}

impl FromStr for Backbone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcn" => Ok(Backbone::Gcn),
            "sage" | "sage-mean" => Ok(Backbone::SageMean),
            other => Err(format!("unknown backbone `{other}` (expected gcn or sage)")),
        }
    }
}

/// Classifier hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub backbone: Backbone,
    pub hidden: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Epoch cap for each refinement round.
    pub epochs: usize,
    /// Early-stopping patience on validation loss.
    pub patience: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            backbone: Backbone::Gcn,
            hidden: 64,
            dropout: 0.5,
            learning_rate: 0.05,
            weight_decay: 5e-5,
            epochs: 20,
            patience: 5,
        }
    }
}
