//! The attribution network: fingerprint encoder, classifier, and the
//! label-conditioned reconstruction decoder.
//!
//! The encoder is four 3x3 stride-2 conv blocks (channels C/4, C/2, C, C)
//! with projected residual skips on blocks 2 and 4; its output map, bounded
//! by `clamp_relu`, is the system fingerprint. The classifier is two 1x1
//! conv layers over that map followed by global average pooling. The
//! condition sub-network embeds a class label into fingerprint space (a
//! dense layer over the one-hot label, squashed through a sigmoid so the
//! gates stay in (0, 1)); the fingerprint is multiplied elementwise with the
//! gate and decoded back to feature space by four transposed-conv layers
//! whose kernels are solved to land exactly on the input shape.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub(crate) use train::argmax;
pub use train::{
    collect_errors, loss_rec, loss_total, sample_nonmatch_label, train, EpochStats,
    PreparedSample, TrainConfig, TrainReport,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    clamp_relu, clamp_relu_backward, relu, relu_backward, softmax_cross_entropy, Conv2d,
    ConvTranspose2d, Dense, LayerParams, mse,
};
use crate::signal::FeatureMatrix;
use crate::tensor::Tensor;

/// Apply the stride-2 conv size map `ceil(n / 2)` four times.
fn encoder_output_axis(mut n: usize) -> usize {
    for _ in 0..4 {
        n = n.div_ceil(2);
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_known_classes: usize,
    pub input_frames: usize,
    pub input_coeffs: usize,
    pub embedding_channels: usize,
    pub activation_cap: f64,
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_known_classes: 6,
            input_frames: 64,
            input_coeffs: 20,
            embedding_channels: 32,
            activation_cap: 1.0,
            alpha: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_known_classes < 2 {
            return Err(Error::argument("need at least 2 known classes"));
        }
        if self.input_frames == 0 || self.input_coeffs == 0 {
            return Err(Error::argument("input shape must be non-empty"));
        }
        if self.embedding_channels == 0 {
            return Err(Error::argument("embedding_channels must be positive"));
        }
        if !(self.activation_cap > 0.0) {
            return Err(Error::argument("activation_cap must be > 0"));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::argument("alpha must be >= 0"));
        }
        Ok(())
    }

    /// `(channels, height, width)` of the encoder output map.
    pub fn embedding_shape(&self) -> (usize, usize, usize) {
        (
            self.embedding_channels,
            encoder_output_axis(self.input_frames),
            encoder_output_axis(self.input_coeffs),
        )
    }

    /// Flattened fingerprint length; also the condition-vector length.
    pub fn condition_dim(&self) -> usize {
        let (c, h, w) = self.embedding_shape();
        c * h * w
    }

    fn encoder_channels(&self) -> [usize; 4] {
        let c = self.embedding_channels;
        [(c / 4).max(1), (c / 2).max(1), c, c]
    }

    fn decoder_channels(&self) -> [usize; 5] {
        let c = self.embedding_channels;
        [c, c, (c / 2).max(1), (c / 4).max(1), 1]
    }
}

/// Kernel/stride plan for one transposed-conv axis: grow `from` into `to`
/// over four layers, halving backwards from the target.
fn deconv_axis_plan(from: usize, to: usize) -> Result<[(usize, usize); 4]> {
    if to < from {
        return Err(Error::argument(format!(
            "decoder target {to} smaller than embedding axis {from}"
        )));
    }
    let mut sizes = [0usize; 5];
    sizes[4] = to;
    for i in (1..=3).rev() {
        sizes[i] = from.max(sizes[i + 1].div_ceil(2));
    }
    sizes[0] = from;
    let mut plan = [(0usize, 0usize); 4];
    for i in 0..4 {
        let (a, b) = (sizes[i], sizes[i + 1]);
        // out = (a - 1) * stride + kernel, padding 0
        plan[i] = if b + 1 >= 2 * a {
            (b + 2 - 2 * a, 2)
        } else {
            (b + 1 - a, 1)
        };
    }
    Ok(plan)
}

/// The trained parameter set of all four sub-networks.
#[derive(Debug, Clone)]
pub struct RetaModel {
    pub config: ModelConfig,
    enc_convs: Vec<Conv2d>,
    enc_projs: Vec<Option<Conv2d>>,
    cls_conv1: Conv2d,
    cls_conv2: Conv2d,
    condition: Dense,
    decoder: Vec<ConvTranspose2d>,
}

impl RetaModel {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let enc_ch = config.encoder_channels();
        let mut enc_convs = Vec::with_capacity(4);
        let mut enc_projs = Vec::with_capacity(4);
        let mut in_c = 1;
        for (i, &out_c) in enc_ch.iter().enumerate() {
            enc_convs.push(Conv2d::new(in_c, out_c, (3, 3), (2, 2), (1, 1), rng));
            // residual skips on blocks 2 and 4, projected to the new shape
            enc_projs.push(if i == 1 || i == 3 {
                Some(Conv2d::new(in_c, out_c, (1, 1), (2, 2), (0, 0), rng))
            } else {
                None
            });
            in_c = out_c;
        }

        let (emb_c, emb_h, emb_w) = config.embedding_shape();
        let cls_conv1 = Conv2d::new(emb_c, emb_c, (1, 1), (1, 1), (0, 0), rng);
        let cls_conv2 = Conv2d::new(emb_c, config.n_known_classes, (1, 1), (1, 1), (0, 0), rng);
        let condition = Dense::new(config.n_known_classes, config.condition_dim(), rng);

        let h_plan = deconv_axis_plan(emb_h, config.input_frames)?;
        let w_plan = deconv_axis_plan(emb_w, config.input_coeffs)?;
        let dec_ch = config.decoder_channels();
        let decoder = (0..4)
            .map(|i| {
                ConvTranspose2d::new(
                    dec_ch[i],
                    dec_ch[i + 1],
                    (h_plan[i].0, w_plan[i].0),
                    (h_plan[i].1, w_plan[i].1),
                    (0, 0),
                    rng,
                )
            })
            .collect();

        Ok(RetaModel {
            config,
            enc_convs,
            enc_projs,
            cls_conv1,
            cls_conv2,
            condition,
            decoder,
        })
    }

    /// Every parameter set with a stable name, in checkpoint order.
    pub fn named_params(&self) -> Vec<(String, &LayerParams)> {
        let mut out = Vec::new();
        for (i, conv) in self.enc_convs.iter().enumerate() {
            out.push((format!("enc.block{}.conv", i + 1), &conv.params));
            if let Some(proj) = &self.enc_projs[i] {
                out.push((format!("enc.block{}.proj", i + 1), &proj.params));
            }
        }
        out.push(("cls.conv1".to_string(), &self.cls_conv1.params));
        out.push(("cls.conv2".to_string(), &self.cls_conv2.params));
        out.push(("cond.embed".to_string(), &self.condition.params));
        for (i, layer) in self.decoder.iter().enumerate() {
            out.push((format!("dec.layer{}", i + 1), &layer.params));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut LayerParams)> {
        let mut out = Vec::new();
        for (i, conv) in self.enc_convs.iter_mut().enumerate() {
            out.push((format!("enc.block{}.conv", i + 1), &mut conv.params));
        }
        for (i, proj) in self.enc_projs.iter_mut().enumerate() {
            if let Some(proj) = proj {
                out.push((format!("enc.block{}.proj", i + 1), &mut proj.params));
            }
        }
        out.push(("cls.conv1".to_string(), &mut self.cls_conv1.params));
        out.push(("cls.conv2".to_string(), &mut self.cls_conv2.params));
        out.push(("cond.embed".to_string(), &mut self.condition.params));
        for (i, layer) in self.decoder.iter_mut().enumerate() {
            out.push((format!("dec.layer{}", i + 1), &mut layer.params));
        }
        out
    }

    /// Parameter sets owned by the decoder and condition sub-networks;
    /// with alpha = 0 these must receive zero gradient.
    pub fn reconstruction_param_names(&self) -> Vec<String> {
        let mut names = vec!["cond.embed".to_string()];
        names.extend((1..=4).map(|i| format!("dec.layer{i}")));
        names
    }

    fn check_features(&self, features: &FeatureMatrix) -> Result<()> {
        if features.rows() != self.config.input_frames
            || features.cols() != self.config.input_coeffs
        {
            return Err(Error::shape(
                format!("{}x{}", self.config.input_frames, self.config.input_coeffs),
                format!("{}x{}", features.rows(), features.cols()),
            ));
        }
        Ok(())
    }

    fn encode_trace(&self, input: &Tensor) -> Result<EncoderTrace> {
        let mut block_inputs = Vec::with_capacity(4);
        let mut pre_acts = Vec::with_capacity(4);
        let mut current = input.clone();
        for (conv, proj) in self.enc_convs.iter().zip(&self.enc_projs) {
            block_inputs.push(current.clone());
            let mut pre = conv.forward(&current)?;
            if let Some(proj) = proj {
                let skip = proj.forward(&current)?;
                for (p, s) in pre.data_mut().iter_mut().zip(skip.data()) {
                    *p += s;
                }
            }
            // block 4's activation is the clamp applied by the caller
            current = if pre_acts.len() < 3 { relu(&pre) } else { pre.clone() };
            pre_acts.push(pre);
        }
        let clamped = clamp_relu(&pre_acts[3], self.config.activation_cap)?;
        Ok(EncoderTrace {
            block_inputs,
            pre_acts,
            clamped,
        })
    }

    /// Fingerprint extraction: the clamped embedding map and its flattened
    /// form. Deterministic; every entry lies in [0, activation_cap].
    pub fn encode(&self, features: &FeatureMatrix) -> Result<(Tensor, Tensor)> {
        self.check_features(features)?;
        let trace = self.encode_trace(&features.to_tensor())?;
        let fingerprint = trace.clamped.reshape(vec![self.config.condition_dim()])?;
        Ok((trace.clamped, fingerprint))
    }

    fn classify_trace(&self, embedding_map: &Tensor) -> Result<ClassifierTrace> {
        let pre1 = self.cls_conv1.forward(embedding_map)?;
        let act1 = relu(&pre1);
        let maps = self.cls_conv2.forward(&act1)?;
        // global average pool per class map
        let (k, h, w) = (maps.shape()[0], maps.shape()[1], maps.shape()[2]);
        let logits = (0..k)
            .map(|c| {
                let base = c * h * w;
                maps.data()[base..base + h * w].iter().sum::<f64>() / (h * w) as f64
            })
            .collect();
        Ok(ClassifierTrace {
            pre1,
            act1,
            map_shape: (k, h, w),
            logits: Tensor::new(vec![k], logits)?,
        })
    }

    /// Logits over the known classes from a fingerprint.
    pub fn classify(&self, fingerprint: &Tensor) -> Result<Tensor> {
        let (c, h, w) = self.config.embedding_shape();
        let map = fingerprint.reshape(vec![c, h, w])?;
        Ok(self.classify_trace(&map)?.logits)
    }

    /// The class-conditional gate vector, strictly inside (0, 1).
    pub fn condition_latent(&self, label: usize) -> Result<Tensor> {
        let k = self.config.n_known_classes;
        if label >= k {
            return Err(Error::argument(format!(
                "label {label} out of range for {k} known classes"
            )));
        }
        let mut onehot = Tensor::zeros(vec![k]);
        onehot.data_mut()[label] = 1.0;
        let raw = self.condition.forward(&onehot)?;
        let data = raw.data().iter().map(|&v| sigmoid(v)).collect();
        Tensor::new(vec![self.config.condition_dim()], data)
    }

    fn decode_trace(&self, gated: &Tensor) -> Result<DecoderTrace> {
        let (c, h, w) = self.config.embedding_shape();
        let mut current = gated.reshape(vec![c, h, w])?;
        let mut layer_inputs = Vec::with_capacity(4);
        let mut pre_acts = Vec::with_capacity(4);
        for (i, layer) in self.decoder.iter().enumerate() {
            layer_inputs.push(current.clone());
            let pre = layer.forward(&current)?;
            // final layer stays linear: LFCC values are unbounded
            current = if i < 3 { relu(&pre) } else { pre.clone() };
            pre_acts.push(pre);
        }
        Ok(DecoderTrace {
            layer_inputs,
            pre_acts,
            output: current,
        })
    }

    /// Reconstruct feature space from a fingerprint under a class condition.
    pub fn reconstruct(&self, fingerprint: &Tensor, label: usize) -> Result<Tensor> {
        let gate = self.condition_latent(label)?;
        let gated = hadamard(fingerprint, &gate)?;
        Ok(self.decode_trace(&gated)?.output)
    }

    /// Encoder backward pass: from the gradient on the clamped embedding map
    /// down through all four blocks. Accumulates parameter gradients.
    fn encode_backward(&mut self, trace: &EncoderTrace, grad_clamped: &Tensor) -> Result<()> {
        let mut grad = clamp_relu_backward(&trace.pre_acts[3], self.config.activation_cap, grad_clamped);
        for i in (0..4).rev() {
            if i < 3 {
                grad = relu_backward(&trace.pre_acts[i], &grad);
            }
            let mut grad_in = self.enc_convs[i].backward(&trace.block_inputs[i], &grad)?;
            if let Some(proj) = &mut self.enc_projs[i] {
                let skip_grad = proj.backward(&trace.block_inputs[i], &grad)?;
                for (g, s) in grad_in.data_mut().iter_mut().zip(skip_grad.data()) {
                    *g += s;
                }
            }
            grad = grad_in;
        }
        Ok(())
    }

    /// Classifier backward from the logits gradient; returns the gradient on
    /// the embedding map (the input the classifier saw).
    fn classifier_backward(
        &mut self,
        embedding_map: &Tensor,
        trace: &ClassifierTrace,
        grad_logits: &Tensor,
    ) -> Result<Tensor> {
        let (k, h, w) = trace.map_shape;
        let mut grad_maps = Tensor::zeros(vec![k, h, w]);
        {
            let gd = grad_maps.data_mut();
            for c in 0..k {
                let g = grad_logits.data()[c] / (h * w) as f64;
                gd[c * h * w..(c + 1) * h * w]
                    .iter_mut()
                    .for_each(|v| *v = g);
            }
        }
        let grad_act1 = self.cls_conv2.backward(&trace.act1, &grad_maps)?;
        let grad_pre1 = relu_backward(&trace.pre1, &grad_act1);
        self.cls_conv1.backward(embedding_map, &grad_pre1)
    }

    /// Decoder backward from the gradient on the reconstruction; returns the
    /// gradient on the gated (fingerprint x condition) vector.
    fn decode_backward(&mut self, trace: &DecoderTrace, grad_output: &Tensor) -> Result<Tensor> {
        let mut grad = grad_output.clone();
        for i in (0..4).rev() {
            if i < 3 {
                grad = relu_backward(&trace.pre_acts[i], &grad);
            }
            grad = self.decoder[i].backward(&trace.layer_inputs[i], &grad)?;
        }
        grad.reshape(vec![self.config.condition_dim()])
    }

    /// Condition backward: gradient on the gate propagates through the
    /// sigmoid into the dense embedding.
    fn condition_backward(&mut self, label: usize, gate: &Tensor, grad_gate: &Tensor) -> Result<()> {
        let k = self.config.n_known_classes;
        let mut onehot = Tensor::zeros(vec![k]);
        onehot.data_mut()[label] = 1.0;
        let grad_raw: Vec<f64> = gate
            .data()
            .iter()
            .zip(grad_gate.data())
            .map(|(&g, &dg)| dg * g * (1.0 - g))
            .collect();
        let grad_raw = Tensor::new(vec![self.config.condition_dim()], grad_raw)?;
        self.condition.backward(&onehot, &grad_raw)?;
        Ok(())
    }

    /// One sample's full forward pass with everything backward needs.
    fn forward_trace(&self, sample: &PreparedSample) -> Result<SampleTrace> {
        let enc = self.encode_trace(&sample.features)?;
        let cls = self.classify_trace(&enc.clamped)?;
        let fingerprint = enc.clamped.reshape(vec![self.config.condition_dim()])?;

        let gate_m = self.condition_latent(sample.label)?;
        let gated_m = hadamard(&fingerprint, &gate_m)?;
        let dec_m = self.decode_trace(&gated_m)?;

        let gate_nm = self.condition_latent(sample.nonmatch_label)?;
        let gated_nm = hadamard(&fingerprint, &gate_nm)?;
        let dec_nm = self.decode_trace(&gated_nm)?;

        Ok(SampleTrace {
            enc,
            cls,
            fingerprint,
            gate_m,
            dec_m,
            gate_nm,
            dec_nm,
        })
    }

    /// Batch loss without touching gradients: `(total, ce, rec)` where
    /// `total = ce + alpha * rec` and both terms are batch means.
    pub fn loss_forward(&self, batch: &[PreparedSample], alpha: f64) -> Result<(f64, f64, f64)> {
        if batch.is_empty() {
            return Err(Error::argument("empty batch"));
        }
        let mut ce_sum = 0.0;
        let mut rec_sum = 0.0;
        for sample in batch {
            let trace = self.forward_trace(sample)?;
            let (ce, _) = softmax_cross_entropy(&trace.cls.logits, sample.label)?;
            let (err_m, _) = mse(&trace.dec_m.output, &sample.features)?;
            let (err_nm, _) = mse(&trace.dec_nm.output, &sample.nonmatch_target)?;
            ce_sum += ce;
            rec_sum += err_m + err_nm;
        }
        let b = batch.len() as f64;
        let (ce, rec) = (ce_sum / b, rec_sum / b);
        Ok((loss_total(ce, rec, alpha)?, ce, rec))
    }

    /// Forward + backward over a batch, accumulating parameter gradients for
    /// the loss `ce + alpha * rec` (batch means). Returns `(total, ce, rec)`.
    pub fn train_step(&mut self, batch: &[PreparedSample], alpha: f64) -> Result<(f64, f64, f64)> {
        if batch.is_empty() {
            return Err(Error::argument("empty batch"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut ce_sum = 0.0;
        let mut rec_sum = 0.0;
        for sample in batch {
            let trace = self.forward_trace(sample)?;
            let (ce, mut grad_logits) = softmax_cross_entropy(&trace.cls.logits, sample.label)?;
            let (err_m, mut grad_m) = mse(&trace.dec_m.output, &sample.features)?;
            let (err_nm, mut grad_nm) = mse(&trace.dec_nm.output, &sample.nonmatch_target)?;
            ce_sum += ce;
            rec_sum += err_m + err_nm;

            grad_logits.data_mut().iter_mut().for_each(|g| *g *= scale);
            let grad_map_cls =
                self.classifier_backward(&trace.enc.clamped, &trace.cls, &grad_logits)?;

            let mut grad_fingerprint = Tensor::zeros(vec![self.config.condition_dim()]);
            if alpha != 0.0 {
                let w = alpha * scale;
                grad_m.data_mut().iter_mut().for_each(|g| *g *= w);
                grad_nm.data_mut().iter_mut().for_each(|g| *g *= w);

                let grad_gated_m = self.decode_backward(&trace.dec_m, &grad_m)?;
                let grad_gated_nm = self.decode_backward(&trace.dec_nm, &grad_nm)?;

                // z = fingerprint * gate
                accumulate_product(&mut grad_fingerprint, &grad_gated_m, &trace.gate_m);
                accumulate_product(&mut grad_fingerprint, &grad_gated_nm, &trace.gate_nm);
                let grad_gate_m = product(&grad_gated_m, &trace.fingerprint)?;
                let grad_gate_nm = product(&grad_gated_nm, &trace.fingerprint)?;
                self.condition_backward(sample.label, &trace.gate_m, &grad_gate_m)?;
                self.condition_backward(sample.nonmatch_label, &trace.gate_nm, &grad_gate_nm)?;
            }

            let (c, h, w) = self.config.embedding_shape();
            let mut grad_clamped = grad_fingerprint.reshape(vec![c, h, w])?;
            for (g, gc) in grad_clamped.data_mut().iter_mut().zip(grad_map_cls.data()) {
                *g += gc;
            }
            self.encode_backward(&trace.enc, &grad_clamped)?;
        }
        let b = batch.len() as f64;
        let (ce, rec) = (ce_sum / b, rec_sum / b);
        Ok((loss_total(ce, rec, alpha)?, ce, rec))
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn product(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    hadamard(a, b)
}

fn accumulate_product(acc: &mut Tensor, a: &Tensor, b: &Tensor) {
    for ((dst, &x), &y) in acc.data_mut().iter_mut().zip(a.data()).zip(b.data()) {
        *dst += x * y;
    }
}

struct EncoderTrace {
    block_inputs: Vec<Tensor>,
    pre_acts: Vec<Tensor>,
    clamped: Tensor,
}

struct ClassifierTrace {
    pre1: Tensor,
    act1: Tensor,
    map_shape: (usize, usize, usize),
    logits: Tensor,
}

struct DecoderTrace {
    layer_inputs: Vec<Tensor>,
    pre_acts: Vec<Tensor>,
    output: Tensor,
}

struct SampleTrace {
    enc: EncoderTrace,
    cls: ClassifierTrace,
    fingerprint: Tensor,
    gate_m: Tensor,
    dec_m: DecoderTrace,
    gate_nm: Tensor,
    dec_nm: DecoderTrace,
}
