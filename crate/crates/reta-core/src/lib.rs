//! Open-set model attribution of deepfake audio with adaptive rejection
//! thresholds.
//!
//! The pipeline: LFCC features feed a small residual convolutional encoder
//! whose clamped embedding (the "system fingerprint") is classified over the
//! known generator classes and, gated by a learned per-class condition
//! vector, decoded back into feature space. Matching and non-matching
//! reconstruction errors collected on training data are fitted with Gaussian
//! KDEs, and a per-class rejection threshold is placed where the total
//! misclassification probability between the two densities is minimal. At
//! inference a sample whose reconstruction error under its predicted class
//! exceeds that class threshold is rejected as Unknown.

pub mod datagen;
pub mod error;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod signal;
pub mod threshold;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use inference::{OpenSetPrediction, Verdict};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{ModelConfig, RetaModel, TrainConfig, TrainReport};
pub use signal::{AudioClip, FeatureMatrix, LfccConfig};
pub use tensor::Tensor;
pub use threshold::{ClassThresholds, ErrorKind, ErrorSample, KdeModel};
