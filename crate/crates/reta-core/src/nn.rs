//! Layer primitives with explicit forward/backward passes.
//!
//! There is no computation graph: each layer exposes `forward(&self, x)` and
//! `backward(&mut self, x, grad_out)`, where the caller keeps the forward
//! inputs it needs for the backward sweep. `backward` accumulates into the
//! layer's gradient buffers and returns the gradient with respect to its
//! input. The architecture is small and fixed, so every backward pass here is
//! covered by a finite-difference check in the tests.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A parameter pair plus matching gradient accumulators.
#[derive(Debug, Clone)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub grad_weights: Tensor,
    pub grad_bias: Tensor,
}

impl LayerParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Self {
        let grad_weights = Tensor::zeros_like(&weights);
        let grad_bias = Tensor::zeros_like(&bias);
        LayerParams {
            weights,
            bias,
            grad_weights,
            grad_bias,
        }
    }

    pub fn zero_grads(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

/// Kaiming-uniform weight tensor: U(-b, b) with b = sqrt(6 / fan_in).
pub fn kaiming_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let count: usize = shape.iter().product();
    let data = (0..count)
        .map(|_| (2.0 * rng.gen::<f64>() - 1.0) * bound)
        .collect();
    Tensor::new(shape, data).expect("finite init")
}

/// 2-D convolution (cross-correlation) over `[C, H, W]` tensors.
///
/// Kernel, stride and padding are per-axis `(h, w)` pairs.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub params: LayerParams,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        assert!(stride.0 >= 1 && stride.1 >= 1, "stride must be >= 1");
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weights = kaiming_uniform(
            vec![out_channels, in_channels, kernel.0, kernel.1],
            fan_in,
            rng,
        );
        let bias = Tensor::zeros(vec![out_channels]);
        Conv2d {
            params: LayerParams::new(weights, bias),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Output spatial size for an `h x w` input.
    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        let (ph, pw) = self.padding;
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::shape(
                format!("input at least {}x{} after padding", kh, kw),
                format!("{}x{} with padding {:?}", h, w, self.padding),
            ));
        }
        Ok((
            (h + 2 * ph - kh) / self.stride.0 + 1,
            (w + 2 * pw - kw) / self.stride.1 + 1,
        ))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.in_channels {
            return Err(Error::shape(
                format!("[{}, h, w]", self.in_channels),
                format!("{s:?}"),
            ));
        }
        let (oh, ow) = self.out_size(s[1], s[2])?;
        Ok((s[1], s[2], oh, ow))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.check_input(x)?;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let wts = self.params.weights.data();
        let bias = self.params.bias.data();
        let xd = x.data();

        let mut out = Tensor::zeros(vec![self.out_channels, oh, ow]);
        let od = out.data_mut();
        for co in 0..self.out_channels {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..self.in_channels {
                        for u in 0..kh {
                            let iy = (y * sh + u) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = (ci * h + iy as usize) * w;
                            let wrow = ((co * self.in_channels + ci) * kh + u) * kw;
                            for v in 0..kw {
                                let ix = (xo * sw + v) as isize - pw as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += xd[xrow + ix as usize] * wts[wrow + v];
                            }
                        }
                    }
                    od[(co * oh + y) * ow + xo] = acc;
                }
            }
        }
        Ok(out)
    }

    /// Accumulate parameter gradients and return the gradient w.r.t. `x`.
    /// `x` must be the same tensor the matching `forward` saw.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.check_input(x)?;
        if grad_out.shape() != [self.out_channels, oh, ow] {
            return Err(Error::shape(
                format!("[{}, {oh}, {ow}]", self.out_channels),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let xd = x.data();
        let gd = grad_out.data();
        let wts = self.params.weights.data().to_vec();

        let mut grad_in = Tensor::zeros(vec![self.in_channels, h, w]);
        let gid = grad_in.data_mut();
        let gw = self.params.grad_weights.data_mut();
        let gb = self.params.grad_bias.data_mut();

        for co in 0..self.out_channels {
            for y in 0..oh {
                for xo in 0..ow {
                    let g = gd[(co * oh + y) * ow + xo];
                    gb[co] += g;
                    for ci in 0..self.in_channels {
                        for u in 0..kh {
                            let iy = (y * sh + u) as isize - ph as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = (ci * h + iy as usize) * w;
                            let wrow = ((co * self.in_channels + ci) * kh + u) * kw;
                            for v in 0..kw {
                                let ix = (xo * sw + v) as isize - pw as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                gw[wrow + v] += g * xd[xrow + ix as usize];
                                gid[xrow + ix as usize] += g * wts[wrow + v];
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

/// Transposed 2-D convolution; the learnable upsampling layer of the decoder.
///
/// Weights are stored `[C_in, C_out, KH, KW]`, so a forward pass here equals
/// the input-gradient of a `Conv2d` whose weights share the same flat layout.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub params: LayerParams,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        assert!(stride.0 >= 1 && stride.1 >= 1, "stride must be >= 1");
        let fan_in = in_channels * kernel.0 * kernel.1;
        let weights = kaiming_uniform(
            vec![in_channels, out_channels, kernel.0, kernel.1],
            fan_in,
            rng,
        );
        let bias = Tensor::zeros(vec![out_channels]);
        ConvTranspose2d {
            params: LayerParams::new(weights, bias),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// Output spatial size: `(n - 1) * stride - 2 * padding + kernel`.
    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = ((h - 1) * self.stride.0 + self.kernel.0) as isize - 2 * self.padding.0 as isize;
        let ow = ((w - 1) * self.stride.1 + self.kernel.1) as isize - 2 * self.padding.1 as isize;
        if oh < 1 || ow < 1 {
            return Err(Error::shape(
                "transposed conv output of at least 1x1".to_string(),
                format!("{oh}x{ow}"),
            ));
        }
        Ok((oh as usize, ow as usize))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.in_channels {
            return Err(Error::shape(
                format!("[{}, h, w]", self.in_channels),
                format!("{s:?}"),
            ));
        }
        let (oh, ow) = self.out_size(s[1], s[2])?;
        Ok((s[1], s[2], oh, ow))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.check_input(x)?;
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let wts = self.params.weights.data();
        let bias = self.params.bias.data();
        let xd = x.data();

        let mut out = Tensor::zeros(vec![self.out_channels, oh, ow]);
        let od = out.data_mut();
        for co in 0..self.out_channels {
            let base = co * oh * ow;
            od[base..base + oh * ow]
                .iter_mut()
                .for_each(|v| *v = bias[co]);
        }
        for ci in 0..self.in_channels {
            for y in 0..h {
                for xi in 0..w {
                    let v = xd[(ci * h + y) * w + xi];
                    for co in 0..self.out_channels {
                        let wbase = (ci * self.out_channels + co) * kh * kw;
                        for u in 0..kh {
                            let oy = (y * sh + u) as isize - ph as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let orow = (co * oh + oy as usize) * ow;
                            for t in 0..kw {
                                let ox = (xi * sw + t) as isize - pw as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                od[orow + ox as usize] += v * wts[wbase + u * kw + t];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.check_input(x)?;
        if grad_out.shape() != [self.out_channels, oh, ow] {
            return Err(Error::shape(
                format!("[{}, {oh}, {ow}]", self.out_channels),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let (kh, kw) = self.kernel;
        let (sh, sw) = self.stride;
        let (ph, pw) = self.padding;
        let xd = x.data();
        let gd = grad_out.data();
        let wts = self.params.weights.data().to_vec();

        let mut grad_in = Tensor::zeros(vec![self.in_channels, h, w]);
        let gid = grad_in.data_mut();
        let gw = self.params.grad_weights.data_mut();
        let gb = self.params.grad_bias.data_mut();

        for co in 0..self.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    gb[co] += gd[(co * oh + oy) * ow + ox];
                }
            }
        }
        for ci in 0..self.in_channels {
            for y in 0..h {
                for xi in 0..w {
                    let xv = xd[(ci * h + y) * w + xi];
                    let mut acc = 0.0;
                    for co in 0..self.out_channels {
                        let wbase = (ci * self.out_channels + co) * kh * kw;
                        for u in 0..kh {
                            let oy = (y * sh + u) as isize - ph as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            let orow = (co * oh + oy as usize) * ow;
                            for t in 0..kw {
                                let ox = (xi * sw + t) as isize - pw as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                let g = gd[orow + ox as usize];
                                gw[wbase + u * kw + t] += g * xv;
                                acc += g * wts[wbase + u * kw + t];
                            }
                        }
                    }
                    gid[(ci * h + y) * w + xi] += acc;
                }
            }
        }
        Ok(grad_in)
    }
}

/// Fully connected layer: `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub params: LayerParams,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let weights = kaiming_uniform(vec![out_dim, in_dim], in_dim, rng);
        let bias = Tensor::zeros(vec![out_dim]);
        Dense {
            params: LayerParams::new(weights, bias),
            in_dim,
            out_dim,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != [self.in_dim] {
            return Err(Error::shape(
                format!("[{}]", self.in_dim),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let w = self.params.weights.data();
        let b = self.params.bias.data();
        let xd = x.data();
        let data = (0..self.out_dim)
            .map(|o| {
                let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                b[o] + row.iter().zip(xd).map(|(wv, xv)| wv * xv).sum::<f64>()
            })
            .collect();
        Tensor::new(vec![self.out_dim], data)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        if grad_out.shape() != [self.out_dim] {
            return Err(Error::shape(
                format!("[{}]", self.out_dim),
                format!("{:?}", grad_out.shape()),
            ));
        }
        let xd = x.data();
        let gd = grad_out.data();
        let w = self.params.weights.data().to_vec();
        let gw = self.params.grad_weights.data_mut();
        let gb = self.params.grad_bias.data_mut();

        let mut grad_in = Tensor::zeros(vec![self.in_dim]);
        let gid = grad_in.data_mut();
        for o in 0..self.out_dim {
            gb[o] += gd[o];
            for i in 0..self.in_dim {
                gw[o * self.in_dim + i] += gd[o] * xd[i];
                gid[i] += gd[o] * w[o * self.in_dim + i];
            }
        }
        Ok(grad_in)
    }
}

/// max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("finite relu")
}

/// Subgradient 0 at the kink: passes gradient only where x > 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("finite relu grad")
}

/// min(max(0, x), cap); the activation bound on the fingerprint layer.
pub fn clamp_relu(x: &Tensor, cap: f64) -> Result<Tensor> {
    if !(cap > 0.0) {
        return Err(Error::argument(format!("clamp cap must be > 0, got {cap}")));
    }
    let data = x.data().iter().map(|&v| v.clamp(0.0, cap)).collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Gradient passes only strictly inside (0, cap).
pub fn clamp_relu_backward(x: &Tensor, cap: f64, grad_out: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 && v < cap { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("finite clamp grad")
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of `logits` against a class index.
///
/// Returns the loss and the gradient w.r.t. the logits,
/// `softmax(logits) - onehot(label)`.
pub fn softmax_cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let k = logits.len();
    if logits.shape().len() != 1 {
        return Err(Error::shape("[k]", format!("{:?}", logits.shape())));
    }
    if label >= k {
        return Err(Error::argument(format!(
            "label {label} out of range for {k} classes"
        )));
    }
    let probs = softmax(logits.data());
    // log-sum-exp form rather than -log(probs[label]) so saturated logits
    // cannot produce log(0).
    let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits
        .data()
        .iter()
        .map(|&v| (v - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    let loss = lse - logits.data()[label];
    let mut grad = probs;
    grad[label] -= 1.0;
    Ok((loss, Tensor::new(vec![k], grad)?))
}

/// Squared-L2 distance: `sum((a - b)^2)` with gradient `2 (a - b)` w.r.t. `a`.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    let mut loss = 0.0;
    let grad: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&av, &bv)| {
            let d = av - bv;
            loss += d * d;
            2.0 * d
        })
        .collect();
    Ok((loss, Tensor::new(a.shape().to_vec(), grad)?))
}

/// Optimizer choice; Adam is the default, plain SGD stays available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
struct Moments {
    m: Tensor,
    v: Tensor,
}

/// Adam with bias correction, plus an optional linear learning-rate decay
/// applied per epoch: `lr = lr0 * (1 - epoch / total_epochs)`.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    lr_scale: f64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
            lr_scale: 1.0,
            moments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd { learning_rate: f64, lr_scale: f64 },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(AdamState::new(learning_rate)),
            OptimizerKind::Sgd => Optimizer::Sgd {
                learning_rate,
                lr_scale: 1.0,
            },
        }
    }

    /// Set the linear-decay factor for the coming epoch (0-based).
    pub fn set_epoch(&mut self, epoch: usize, total_epochs: usize, decay: bool) {
        let scale = if decay && total_epochs > 0 {
            1.0 - epoch as f64 / total_epochs as f64
        } else {
            1.0
        };
        match self {
            Optimizer::Adam(state) => state.lr_scale = scale,
            Optimizer::Sgd { lr_scale, .. } => *lr_scale = scale,
        }
    }

    /// Apply one update to every parameter set, then zero the gradients.
    ///
    /// The caller must pass the same parameter tensors in the same order on
    /// every step; moment buffers are matched positionally.
    pub fn step(&mut self, params: &mut [&mut LayerParams]) -> Result<()> {
        match self {
            Optimizer::Adam(state) => {
                if state.moments.is_empty() {
                    for p in params.iter() {
                        state.moments.push(Moments {
                            m: Tensor::zeros_like(&p.weights),
                            v: Tensor::zeros_like(&p.weights),
                        });
                        state.moments.push(Moments {
                            m: Tensor::zeros_like(&p.bias),
                            v: Tensor::zeros_like(&p.bias),
                        });
                    }
                }
                if state.moments.len() != 2 * params.len() {
                    return Err(Error::argument(
                        "optimizer was initialized with a different parameter list".to_string(),
                    ));
                }
                state.step_count += 1;
                let t = state.step_count as i32;
                let bc1 = 1.0 - state.beta1.powi(t);
                let bc2 = 1.0 - state.beta2.powi(t);
                let lr = state.learning_rate * state.lr_scale;
                for (i, p) in params.iter_mut().enumerate() {
                    let (wm, bm) = {
                        let (left, right) = state.moments.split_at_mut(2 * i + 1);
                        (&mut left[2 * i], &mut right[0])
                    };
                    for (values, grads, mom) in [
                        (p.weights.data_mut(), p.grad_weights.data(), wm),
                        (p.bias.data_mut(), p.grad_bias.data(), bm),
                    ] {
                        let md = mom.m.data_mut();
                        let vd = mom.v.data_mut();
                        for j in 0..values.len() {
                            let g = grads[j];
                            md[j] = state.beta1 * md[j] + (1.0 - state.beta1) * g;
                            vd[j] = state.beta2 * vd[j] + (1.0 - state.beta2) * g * g;
                            let m_hat = md[j] / bc1;
                            let v_hat = vd[j] / bc2;
                            values[j] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
                        }
                    }
                    p.zero_grads();
                }
            }
            Optimizer::Sgd {
                learning_rate,
                lr_scale,
            } => {
                let lr = *learning_rate * *lr_scale;
                for p in params.iter_mut() {
                    for (values, grads) in [
                        (p.weights.data_mut(), p.grad_weights.data()),
                        (p.bias.data_mut(), p.grad_bias.data()),
                    ] {
                        for j in 0..values.len() {
                            values[j] -= lr * grads[j];
                        }
                    }
                    p.zero_grads();
                }
            }
        }
        Ok(())
    }
}
