//! Toy-scale CTVR classifier: a convolutional extractor and a bidirectional
//! visual LSTM over the rows of its final feature map, fused into a softmax
//! head, trained with plain SGD on cross-entropy.

mod checkpoint;
mod conv;
mod head;
mod linalg;
mod lstm;
mod model;
mod train;
mod tune;

pub use checkpoint::{load_model, read_model, save_model, write_model, CHECKPOINT_VERSION};
pub use conv::{conv_feature_map, conv_forward, extract_conv_features, ConvLayer, FeatureMap, PoolKind};
pub use head::{fuse_and_classify, softmax, DenseLayer, FusionHead};
pub use linalg::Matrix;
pub use lstm::{bivlstm_cell, bivlstm_sequence, BiVlstmParams, Direction, LstmDirection};
pub use model::{CtvrModel, Hyperparameters, CLASS_COUNT};
pub use train::{evaluate_accuracy, split_dataset, train, Dataset, TrainConfig, TrainOutcome, TrainRecord};
pub use tune::{tune_hyperparameters, HyperParam, HyperSpace, TuneOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eho::EhoError;

#[derive(Debug, Error)]
pub enum CtvrError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("training diverged at step {step}: non-finite loss")]
    Divergence { step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Optimizer(#[from] EhoError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    /// Negative slope 0.01.
    LeakyRelu,
    /// `alpha = 1`.
    Elu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    0.01 * z
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.01
                }
            }
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::LeakyRelu => 1,
            Activation::Elu => 2,
        }
    }

    pub(crate) fn from_code(c: u32) -> Option<Self> {
        [Activation::Relu, Activation::LeakyRelu, Activation::Elu].get(c as usize).copied()
    }
}
