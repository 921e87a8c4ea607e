//! Attention-based item collaborative filtering with calibration and
//! attention-reliability audits.
//!
//! The crate trains a DeepICF-style recommender on implicit feedback (item
//! embeddings, Hadamard pairwise interactions, beta-smoothed attention
//! pooling, an MLP tower and a two-class softmax head) and provides three
//! audit instruments over the trained model:
//!
//! * reliability diagrams with expected calibration error ([`audit::reliability_diagram`]),
//! * attention-weight permutation experiments ([`audit::permutation_experiment`]),
//! * cross-seed attention-stability analysis ([`audit::stability_experiment`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The type
//! aliases at the crate root pin the double-precision lane used by training,
//! checkpoints and reports.

pub mod audit;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use rng::Stream;
pub use scalar::Scalar;

/// Two-class interaction label. `Negative` maps to softmax output index 0,
/// `Positive` to index 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        match i {
            0 => Label::Negative,
            1 => Label::Positive,
            _ => panic!("label index {i} out of range"),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Negative => write!(f, "negative"),
            Label::Positive => write!(f, "positive"),
        }
    }
}

// Double-precision aliases: the lane used by the CLI, checkpoints and reports.
pub type ModelParams = model::ModelParams<f64>;
pub type ForwardTrace = model::ForwardTrace<f64>;
pub type Prediction = model::Prediction<f64>;
pub type AttentionDistribution = model::AttentionDistribution<f64>;
pub type Gradients = trainer::Gradients<f64>;
pub type OptimizerState = trainer::OptimizerState<f64>;
pub type LossConfig = trainer::LossConfig<f64>;
pub type TrainedModel = trainer::TrainedModel<f64>;
