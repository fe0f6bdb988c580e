//! Joint training of the classifier and reconstruction paths, and the
//! post-training error sweep that feeds calibration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mse, Optimizer, OptimizerKind};
use crate::signal::FeatureMatrix;
use crate::tensor::Tensor;
use crate::threshold::{ErrorKind, ErrorSample};

use super::RetaModel;

/// Training settings. Desk-scale defaults (batch 32, 20 epochs); the larger
/// published regime stays reachable through the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: bool,
    pub seed: u64,
    pub alpha: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 20,
            learning_rate: 1e-3,
            lr_decay: true,
            seed: 7,
            alpha: 1.0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::argument("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::argument("epochs must be >= 1"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::argument("alpha must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_ce: f64,
    pub loss_rec: f64,
    pub loss_total: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_dev_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.dev_accuracy)
    }
}

/// One training sample with its non-match pairing resolved: the wrong-class
/// condition label and a real feature matrix drawn from that class.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub features: Tensor,
    pub label: usize,
    pub nonmatch_label: usize,
    pub nonmatch_target: Tensor,
}

/// Uniform draw over the known classes excluding `true_label`.
pub fn sample_nonmatch_label(
    true_label: usize,
    n_classes: usize,
    rng: &mut impl Rng,
) -> Result<usize> {
    if n_classes < 2 {
        return Err(Error::argument(
            "need at least 2 classes to sample a non-matching label",
        ));
    }
    if true_label >= n_classes {
        return Err(Error::argument(format!(
            "label {true_label} out of range for {n_classes} classes"
        )));
    }
    let draw = rng.gen_range(0..n_classes - 1);
    Ok(if draw >= true_label { draw + 1 } else { draw })
}

/// Reconstruction loss of Eq-style batches: the mean over items of
/// `|X - X_m|^2 + |X' - X_nm|^2`. Items are `(x, x_m, x_prime, x_nm)`.
pub fn loss_rec(items: &[(Tensor, Tensor, Tensor, Tensor)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::argument("loss_rec needs at least one item"));
    }
    let mut sum = 0.0;
    for (x, x_m, x_prime, x_nm) in items {
        let (matched, _) = mse(x, x_m)?;
        let (nonmatched, _) = mse(x_prime, x_nm)?;
        sum += matched + nonmatched;
    }
    Ok(sum / items.len() as f64)
}

/// Total loss: `ce + alpha * rec`.
pub fn loss_total(l_ce: f64, l_rec: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::argument(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(l_ce + alpha * l_rec)
}

/// Indices of every dataset item, grouped by label.
fn class_index(items: &[(FeatureMatrix, usize)], n_classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut index = vec![Vec::new(); n_classes];
    for (i, (_, label)) in items.iter().enumerate() {
        index
            .get_mut(*label)
            .ok_or_else(|| {
                Error::argument(format!(
                    "label {label} out of range for {n_classes} known classes"
                ))
            })?
            .push(i);
    }
    Ok(index)
}

/// Draw a non-matching class and a donor item index from it. Classes with
/// nothing to donate are redrawn (bounded), keeping the draw uniform over
/// the populated alternatives.
fn draw_nonmatch(
    label: usize,
    index: &[Vec<usize>],
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize)> {
    let mut nonmatch_label = sample_nonmatch_label(label, n_classes, rng)?;
    let mut attempts = 0;
    while index[nonmatch_label].is_empty() {
        attempts += 1;
        if attempts > 32 * n_classes {
            return Err(Error::argument(
                "no other class has samples to draw a non-match target from",
            ));
        }
        nonmatch_label = sample_nonmatch_label(label, n_classes, rng)?;
    }
    let donors = &index[nonmatch_label];
    Ok((nonmatch_label, donors[rng.gen_range(0..donors.len())]))
}

/// Resolve non-match pairings for a batch of item indices.
fn prepare(
    items: &[(FeatureMatrix, usize)],
    picks: &[usize],
    index: &[Vec<usize>],
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PreparedSample>> {
    picks
        .iter()
        .map(|&i| {
            let (features, label) = &items[i];
            let (nonmatch_label, target_idx) = draw_nonmatch(*label, index, n_classes, rng)?;
            Ok(PreparedSample {
                features: features.to_tensor(),
                label: *label,
                nonmatch_label,
                nonmatch_target: items[target_idx].0.to_tensor(),
            })
        })
        .collect()
}

/// Closed-set accuracy of argmax classification over a labeled set.
fn closed_set_accuracy(model: &RetaModel, items: &[(FeatureMatrix, usize)]) -> Result<f64> {
    let mut correct = 0usize;
    for (features, label) in items {
        let (_, fingerprint) = model.encode(features)?;
        let logits = model.classify(&fingerprint)?;
        let pred = argmax(logits.data());
        if pred == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len() as f64)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Train in place over the known-class items. Deterministic for a fixed
/// seed: shuffling and non-match pairing draw from named sub-streams.
pub fn train(
    model: &mut RetaModel,
    train_items: &[(FeatureMatrix, usize)],
    dev_items: &[(FeatureMatrix, usize)],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_items.is_empty() {
        return Err(Error::argument("training dataset is empty"));
    }
    for (f, _) in train_items.iter().chain(dev_items) {
        if f.rows() != model.config.input_frames || f.cols() != model.config.input_coeffs {
            return Err(Error::shape(
                format!(
                    "{}x{} features",
                    model.config.input_frames, model.config.input_coeffs
                ),
                format!("{}x{}", f.rows(), f.cols()),
            ));
        }
    }
    let n_classes = model.config.n_known_classes;
    let index = class_index(train_items, n_classes)?;
    class_index(dev_items, n_classes)?;

    let mut shuffle_rng = crate::rng::stream_rng(config.seed, "shuffle");
    let mut nonmatch_rng = crate::rng::stream_rng(config.seed, "nonmatch");
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);

    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    for epoch in 0..config.epochs {
        optimizer.set_epoch(epoch, config.epochs, config.lr_decay);
        shuffle(&mut order, &mut shuffle_rng);

        let mut ce_sum = 0.0;
        let mut rec_sum = 0.0;
        let mut seen = 0usize;
        for (batch_no, picks) in order.chunks(config.batch_size).enumerate() {
            let batch = prepare(train_items, picks, &index, n_classes, &mut nonmatch_rng)?;
            let (total, ce, rec) = model.train_step(&batch, config.alpha)?;
            if !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} batch {batch_no}"
                )));
            }
            let mut params: Vec<_> = model
                .named_params_mut()
                .into_iter()
                .map(|(_, p)| p)
                .collect();
            optimizer.step(&mut params)?;
            ce_sum += ce * picks.len() as f64;
            rec_sum += rec * picks.len() as f64;
            seen += picks.len();
        }

        let loss_ce = ce_sum / seen as f64;
        let rec = rec_sum / seen as f64;
        let dev_accuracy = if dev_items.is_empty() {
            None
        } else {
            Some(closed_set_accuracy(model, dev_items)?)
        };
        report.epochs.push(EpochStats {
            epoch,
            loss_ce,
            loss_rec: rec,
            loss_total: loss_total(loss_ce, rec, config.alpha)?,
            dev_accuracy,
        });
    }
    Ok(report)
}

/// Fisher-Yates with our own rng type, to keep the byte stream stable.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Matching and non-matching reconstruction errors for every item, two
/// `ErrorSample`s per item, both filed under the item's true class. The
/// non-match pairing mirrors training and is driven by the caller's rng.
pub fn collect_errors(
    model: &RetaModel,
    items: &[(FeatureMatrix, usize)],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ErrorSample>> {
    if items.is_empty() {
        return Err(Error::argument("dataset is empty"));
    }
    let n_classes = model.config.n_known_classes;
    let index = class_index(items, n_classes)?;

    let mut out = Vec::with_capacity(items.len() * 2);
    for (features, label) in items {
        let (nonmatch_label, target_idx) = draw_nonmatch(*label, &index, n_classes, rng)?;
        let (_, fingerprint) = model.encode(features)?;
        let matched = model.reconstruct(&fingerprint, *label)?;
        let (err_m, _) = mse(&matched, &features.to_tensor())?;
        let nonmatched = model.reconstruct(&fingerprint, nonmatch_label)?;
        let (err_nm, _) = mse(&nonmatched, &items[target_idx].0.to_tensor())?;
        out.push(ErrorSample::new(*label, ErrorKind::Match, err_m)?);
        out.push(ErrorSample::new(*label, ErrorKind::NonMatch, err_nm)?);
    }
    Ok(out)
}
