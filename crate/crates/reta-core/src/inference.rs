//! Open-set decision rule and the softmax-threshold baseline.
//!
//! A test sample is encoded, classified, then reconstructed under its
//! *predicted* class condition; the true label is never consulted. If the
//! reconstruction error is strictly below the predicted class's threshold
//! the prediction stands, otherwise the sample is rejected as Unknown.
//! Equality rejects.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RetaModel;
use crate::nn::{mse, softmax};
use crate::signal::FeatureMatrix;
use crate::threshold::ClassThresholds;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Known(usize),
    Unknown,
}

impl Verdict {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Verdict::Unknown)
    }

    /// Class index with Unknown mapped to `n_known` (the extra class the
    /// metrics use) — handy for confusion-matrix indexing.
    pub fn class_index(&self, n_known: usize) -> usize {
        match self {
            Verdict::Known(c) => *c,
            Verdict::Unknown => n_known,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetPrediction {
    pub verdict: Verdict,
    /// Pre-rejection argmax of the logits.
    pub predicted_class: usize,
    /// Unset for the softmax baseline, which never reconstructs.
    pub reconstruction_error: Option<f64>,
    pub threshold_used: Option<f64>,
    pub logits: Vec<f64>,
}

impl OpenSetPrediction {
    pub fn max_prob(&self) -> f64 {
        softmax(&self.logits)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The rejection rule: strict less-than accepts, so an error exactly at the
/// threshold rejects.
pub fn apply_rejection_rule(predicted_class: usize, error: f64, threshold: f64) -> Verdict {
    if error < threshold {
        Verdict::Known(predicted_class)
    } else {
        Verdict::Unknown
    }
}

/// Full open-set prediction for one clip's features.
pub fn predict_open_set(
    features: &FeatureMatrix,
    model: &RetaModel,
    thresholds: &ClassThresholds,
) -> Result<OpenSetPrediction> {
    let k = model.config.n_known_classes;
    if thresholds.n_classes() != k {
        return Err(Error::Config(format!(
            "thresholds cover {} classes, model has {k}",
            thresholds.n_classes()
        )));
    }
    let (_, fingerprint) = model.encode(features)?;
    let logits = model.classify(&fingerprint)?;
    let predicted_class = crate::model::argmax(logits.data());
    let entry = thresholds
        .get(predicted_class)
        .ok_or_else(|| Error::Config(format!("no threshold for class {predicted_class}")))?;

    let reconstructed = model.reconstruct(&fingerprint, predicted_class)?;
    let (error, _) = mse(&reconstructed, &features.to_tensor())?;
    Ok(OpenSetPrediction {
        verdict: apply_rejection_rule(predicted_class, error, entry.threshold),
        predicted_class,
        reconstruction_error: Some(error),
        threshold_used: Some(entry.threshold),
        logits: logits.data().to_vec(),
    })
}

/// Baseline: accept the argmax class iff its softmax probability reaches
/// `tau`, never reconstructing anything.
pub fn predict_softmax_baseline(
    features: &FeatureMatrix,
    model: &RetaModel,
    tau: f64,
) -> Result<OpenSetPrediction> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::argument(format!(
            "tau must be within [0, 1], got {tau}"
        )));
    }
    let (_, fingerprint) = model.encode(features)?;
    let logits = model.classify(&fingerprint)?;
    let predicted_class = crate::model::argmax(logits.data());
    let probs = softmax(logits.data());
    let verdict = if probs[predicted_class] >= tau {
        Verdict::Known(predicted_class)
    } else {
        Verdict::Unknown
    };
    Ok(OpenSetPrediction {
        verdict,
        predicted_class,
        reconstruction_error: None,
        threshold_used: None,
        logits: logits.data().to_vec(),
    })
}

/// One line of the batch prediction output. Unknown is encoded as
/// verdict -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub path: String,
    pub verdict: i64,
    pub predicted_class: usize,
    pub error: Option<f64>,
    pub threshold: Option<f64>,
    pub max_prob: f64,
}

impl PredictionRecord {
    pub fn new(path: impl Into<String>, prediction: &OpenSetPrediction) -> Self {
        PredictionRecord {
            path: path.into(),
            verdict: match prediction.verdict {
                Verdict::Known(c) => c as i64,
                Verdict::Unknown => -1,
            },
            predicted_class: prediction.predicted_class,
            error: prediction.reconstruction_error,
            threshold: prediction.threshold_used,
            max_prob: prediction.max_prob(),
        }
    }
}

/// Write one JSON object per line.
pub fn write_predictions_jsonl(
    records: &[PredictionRecord],
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    let mut file = fs::File::create(path.as_ref())?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
