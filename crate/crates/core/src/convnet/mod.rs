//! A from-scratch ConvNet engine: forward/backward passes, softmax and
//! multiclass-hinge losses, relu/tanh activations, SGD training and
//! per-parameter freezing.
//!
//! Pixels enter the network in intensity levels (0..255) and are divided
//! by 255 at model entry, so additive noise expressed in intensity levels
//! keeps its meaning all the way through.

mod layers;

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Intensity scaling applied to every batch at model entry.
const INPUT_SCALE: f64 = 1.0 / 255.0;

/// One layer of the network, described by kind and extents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Relu,
    Tanh,
    FullyConnected {
        out_units: usize,
    },
}

impl LayerSpec {
    /// Output shape for a single example of the given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel_h,
                kernel_w,
                stride,
            } => {
                if input.len() != 3 {
                    return Err(Error::RankMismatch {
                        expected: 3,
                        shape: input.to_vec(),
                    });
                }
                let (h, w) = (input[1], input[2]);
                let (oh, ow) = layers::conv_output_hw(h, w, kernel_h, kernel_w, stride)
                    .ok_or_else(|| {
                        Error::InvalidModel(format!(
                            "conv {kernel_h}x{kernel_w}/{stride} does not fit input {input:?}"
                        ))
                    })?;
                Ok(vec![out_channels, oh, ow])
            }
            LayerSpec::MaxPool { window, stride } => {
                if input.len() != 3 {
                    return Err(Error::RankMismatch {
                        expected: 3,
                        shape: input.to_vec(),
                    });
                }
                let (c, h, w) = (input[0], input[1], input[2]);
                let (oh, ow) =
                    layers::conv_output_hw(h, w, window, window, stride).ok_or_else(|| {
                        Error::InvalidModel(format!(
                            "maxpool {window}/{stride} does not fit input {input:?}"
                        ))
                    })?;
                Ok(vec![c, oh, ow])
            }
            LayerSpec::Relu | LayerSpec::Tanh => Ok(input.to_vec()),
            LayerSpec::FullyConnected { out_units } => Ok(vec![out_units]),
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Relu => "relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::FullyConnected { .. } => "fully_connected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
    MulticlassHinge,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::SoftmaxCrossEntropy => "softmax_cross_entropy",
            LossKind::MulticlassHinge => "multiclass_hinge",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "softmax_cross_entropy" | "softmax" | "soft" => Ok(LossKind::SoftmaxCrossEntropy),
            "multiclass_hinge" | "hinge" | "hing" => Ok(LossKind::MulticlassHinge),
            other => Err(Error::InvalidConfig(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation `{other}`"
            ))),
        }
    }
}

/// Which parameter tensors [`Model::set_frozen`] freezes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreezeSelector {
    FcLayers,
    ConvLayers,
    All,
    None,
}

/// Labeled image collection; images are `[n, c, h, w]` with intensities
/// in `[0, 255]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::RankMismatch {
                expected: 4,
                shape: images.shape().to_vec(),
            });
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::LengthMismatch {
                shape: images.shape().to_vec(),
                expected: images.shape()[0],
                actual: labels.len(),
            });
        }
        Ok(Self { images, labels })
    }

    /// Stacks per-example `[c, h, w]` tensors into a dataset.
    pub fn from_images(images: &[Tensor], labels: Vec<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let shape = images[0].shape().to_vec();
        let mut data = Vec::with_capacity(images.len() * images[0].len());
        for img in images {
            if img.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: img.shape().to_vec(),
                });
            }
            data.extend_from_slice(img.data());
        }
        let mut full = vec![images.len()];
        full.extend_from_slice(&shape);
        Dataset::new(Tensor::new(full, data)?, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    /// Copy of example `i` as a `[c, h, w]` tensor.
    pub fn image(&self, i: usize) -> Tensor {
        let per = self.images.len() / self.len();
        let start = i * per;
        let data = self.images.data()[start..start + per].to_vec();
        Tensor::new(self.image_shape().to_vec(), data).expect("image slice shape")
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Gathers examples into a contiguous `[k, c, h, w]` batch.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let per = self.images.len() / self.len();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        let [c, h, w] = self.image_shape();
        (
            Tensor::new(vec![indices.len(), c, h, w], data).expect("batch shape"),
            labels,
        )
    }
}

/// Activations recorded by [`Model::forward`] for the matching backward
/// pass. Tied to the parameter revision that produced it.
#[derive(Debug)]
pub struct ForwardCache {
    revision: u64,
    batch_size: usize,
    layer_inputs: Vec<Tensor>,
    pool_argmax: Vec<Option<Vec<usize>>>,
}

/// Ordered layer list with parameters, freeze flags and loss configuration.
#[derive(Debug, Clone)]
pub struct Model {
    layers: Vec<LayerSpec>,
    input_shape: [usize; 3],
    params: Vec<Tensor>,
    param_owner: Vec<usize>,
    frozen: Vec<bool>,
    loss_kind: LossKind,
    num_classes: usize,
    revision: u64,
}

impl Model {
    /// Builds a model with Glorot-uniform weights and zero biases.
    pub fn new(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        loss_kind: LossKind,
        num_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidModel("num_classes must be positive".into()));
        }
        let mut params = Vec::new();
        let mut param_owner = Vec::new();
        let mut shape = input_shape.to_vec();
        for (li, layer) in layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel_h,
                    kernel_w,
                    ..
                } => {
                    let in_channels = shape[0];
                    let fan_in = in_channels * kernel_h * kernel_w;
                    let fan_out = out_channels * kernel_h * kernel_w;
                    params.push(uniform_init(
                        vec![out_channels, in_channels, kernel_h, kernel_w],
                        fan_in,
                        fan_out,
                        rng,
                    ));
                    param_owner.push(li);
                    params.push(Tensor::zeros(vec![out_channels]));
                    param_owner.push(li);
                }
                LayerSpec::FullyConnected { out_units } => {
                    let features: usize = shape.iter().product();
                    params.push(uniform_init(
                        vec![out_units, features],
                        features,
                        out_units,
                        rng,
                    ));
                    param_owner.push(li);
                    params.push(Tensor::zeros(vec![out_units]));
                    param_owner.push(li);
                }
                _ => {}
            }
            shape = layer.output_shape(&shape)?;
        }
        if shape != vec![num_classes] {
            return Err(Error::InvalidModel(format!(
                "final layer produces {shape:?}, expected [{num_classes}]"
            )));
        }
        let frozen = vec![false; params.len()];
        Ok(Self {
            layers,
            input_shape,
            params,
            param_owner,
            frozen,
            loss_kind,
            num_classes,
            revision: 0,
        })
    }

    /// The reference architecture used throughout the toolkit:
    /// conv 5x5 -> 16, activation, maxpool 2/2, conv 5x5 -> 16, activation,
    /// maxpool 2/2, fully connected to `num_classes`.
    pub fn desk_cnn(
        input_shape: [usize; 3],
        num_classes: usize,
        activation: Activation,
        loss_kind: LossKind,
        rng: &mut Rng,
    ) -> Result<Self> {
        let act = match activation {
            Activation::Relu => LayerSpec::Relu,
            Activation::Tanh => LayerSpec::Tanh,
        };
        let layers = vec![
            LayerSpec::Conv {
                out_channels: 16,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
            },
            act.clone(),
            LayerSpec::MaxPool {
                window: 2,
                stride: 2,
            },
            LayerSpec::Conv {
                out_channels: 16,
                kernel_h: 5,
                kernel_w: 5,
                stride: 1,
            },
            act,
            LayerSpec::MaxPool {
                window: 2,
                stride: 2,
            },
            LayerSpec::FullyConnected {
                out_units: num_classes,
            },
        ];
        Model::new(input_shape, layers, loss_kind, num_classes, rng)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Parameter tensors in layer order, weights before bias.
    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn param_mut(&mut self, index: usize) -> &mut Tensor {
        self.revision += 1;
        &mut self.params[index]
    }

    pub(crate) fn set_params(&mut self, params: Vec<Tensor>) {
        debug_assert_eq!(params.len(), self.params.len());
        self.revision += 1;
        self.params = params;
    }

    pub fn frozen_flags(&self) -> &[bool] {
        &self.frozen
    }

    /// Layer index owning parameter tensor `index`.
    pub fn param_layer(&self, index: usize) -> usize {
        self.param_owner[index]
    }

    /// FNV-1a hash over architecture and parameter bits; stable id for
    /// metadata sidecars.
    pub fn fingerprint(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |byte: u8| {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
        };
        for layer in &self.layers {
            for b in format!("{layer:?}").bytes() {
                eat(b);
            }
        }
        for p in &self.params {
            for v in p.data() {
                for b in v.to_bits().to_le_bytes() {
                    eat(b);
                }
            }
        }
        hash
    }

    /// Sets freeze flags: the selected layers' parameters become frozen,
    /// everything else is unfrozen.
    pub fn set_frozen(&mut self, selector: FreezeSelector) {
        for (i, flag) in self.frozen.iter_mut().enumerate() {
            let layer = &self.layers[self.param_owner[i]];
            *flag = match selector {
                FreezeSelector::All => true,
                FreezeSelector::None => false,
                FreezeSelector::FcLayers => matches!(layer, LayerSpec::FullyConnected { .. }),
                FreezeSelector::ConvLayers => matches!(layer, LayerSpec::Conv { .. }),
            };
        }
    }

    /// Class scores for a `[n, c, h, w]` batch plus the activation cache
    /// needed by [`Model::backward`].
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        if batch.rank() != 4 {
            return Err(Error::RankMismatch {
                expected: 4,
                shape: batch.shape().to_vec(),
            });
        }
        let n = batch.shape()[0];
        if batch.shape()[1..] != self.input_shape {
            return Err(Error::LayerShape {
                layer: 0,
                expected: self.input_shape.to_vec(),
                actual: batch.shape()[1..].to_vec(),
            });
        }
        let mut cache = ForwardCache {
            revision: self.revision,
            batch_size: n,
            layer_inputs: Vec::with_capacity(self.layers.len()),
            pool_argmax: vec![None; self.layers.len()],
        };
        let mut current = batch.scale(INPUT_SCALE);
        let mut shape = self.input_shape.to_vec();
        let mut param_idx = 0;
        for (li, layer) in self.layers.iter().enumerate() {
            if current.shape()[1..] != shape[..] {
                return Err(Error::LayerShape {
                    layer: li,
                    expected: shape,
                    actual: current.shape()[1..].to_vec(),
                });
            }
            let next = match *layer {
                LayerSpec::Conv { stride, .. } => {
                    let weights = &self.params[param_idx];
                    let bias = &self.params[param_idx + 1];
                    param_idx += 2;
                    layers::conv_forward(&current, weights, bias, stride)
                }
                LayerSpec::MaxPool { window, stride } => {
                    let (out, argmax) = layers::maxpool_forward(&current, window, stride);
                    cache.pool_argmax[li] = Some(argmax);
                    out
                }
                LayerSpec::Relu => layers::relu_forward(&current),
                LayerSpec::Tanh => layers::tanh_forward(&current),
                LayerSpec::FullyConnected { .. } => {
                    let weights = &self.params[param_idx];
                    let bias = &self.params[param_idx + 1];
                    param_idx += 2;
                    layers::fc_forward(&current, weights, bias)
                }
            };
            shape = layer.output_shape(&shape)?;
            cache.layer_inputs.push(current);
            current = next;
        }
        Ok((current, cache))
    }

    /// Loss value and its gradient with respect to the scores.
    pub fn loss(&self, scores: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
        let n = scores.shape()[0];
        let k = scores.shape()[1];
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                shape: scores.shape().to_vec(),
                expected: n,
                actual: labels.len(),
            });
        }
        for (i, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange {
                    index: i,
                    label,
                    num_classes: k,
                });
            }
        }
        let s = scores.data();
        let mut grad = vec![0.0; s.len()];
        let mut total = 0.0;
        let inv_n = 1.0 / n as f64;
        match self.loss_kind {
            LossKind::SoftmaxCrossEntropy => {
                for (i, &label) in labels.iter().enumerate() {
                    let row = &s[i * k..(i + 1) * k];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    // -ln p_c via log-sum-exp keeps this finite for any scores.
                    total += (max + sum_exp.ln() - row[label]) * inv_n;
                    for j in 0..k {
                        let p = (row[j] - max).exp() / sum_exp;
                        grad[i * k + j] = (p - if j == label { 1.0 } else { 0.0 }) * inv_n;
                    }
                }
            }
            LossKind::MulticlassHinge => {
                for (i, &label) in labels.iter().enumerate() {
                    let row = &s[i * k..(i + 1) * k];
                    let mut violations = 0.0;
                    for j in 0..k {
                        if j == label {
                            continue;
                        }
                        let margin = row[j] - row[label] + 1.0;
                        if margin > 0.0 {
                            total += margin * inv_n;
                            grad[i * k + j] = inv_n;
                            violations += 1.0;
                        }
                    }
                    grad[i * k + label] = -violations * inv_n;
                }
            }
        }
        Ok((total, Tensor::new(vec![n, k], grad)?))
    }

    /// Gradients for every parameter tensor (exact zeros for frozen ones)
    /// and the gradient with respect to the input batch in intensity units.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_scores: &Tensor,
    ) -> Result<(Vec<Tensor>, Tensor)> {
        if cache.revision != self.revision {
            return Err(Error::StaleCache);
        }
        if grad_scores.shape() != [cache.batch_size, self.num_classes] {
            return Err(Error::ShapeMismatch {
                left: grad_scores.shape().to_vec(),
                right: vec![cache.batch_size, self.num_classes],
            });
        }
        let mut param_grads = vec![Tensor::zeros(vec![0]); self.params.len()];
        let mut grad = grad_scores.clone();
        let mut param_idx = self.params.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.layer_inputs[li];
            grad = match *layer {
                LayerSpec::Conv { stride, .. } => {
                    param_idx -= 2;
                    let want = !self.frozen[param_idx];
                    let (params, gx) =
                        layers::conv_backward(input, &self.params[param_idx], stride, &grad, want);
                    self.store_param_grads(&mut param_grads, param_idx, params);
                    gx
                }
                LayerSpec::MaxPool { .. } => {
                    let argmax = cache.pool_argmax[li].as_ref().expect("pool cache present");
                    layers::maxpool_backward(input.shape(), argmax, &grad)
                }
                LayerSpec::Relu => layers::relu_backward(input, &grad),
                LayerSpec::Tanh => layers::tanh_backward(input, &grad),
                LayerSpec::FullyConnected { .. } => {
                    param_idx -= 2;
                    let want = !self.frozen[param_idx];
                    let (params, gx) =
                        layers::fc_backward(input, &self.params[param_idx], &grad, want);
                    self.store_param_grads(&mut param_grads, param_idx, params);
                    gx
                }
            };
        }
        // Chain through the 1/255 input scaling so the gradient is in
        // intensity-level units, matching how noise is expressed.
        Ok((param_grads, grad.scale(INPUT_SCALE)))
    }

    fn store_param_grads(
        &self,
        param_grads: &mut [Tensor],
        param_idx: usize,
        computed: Option<(Tensor, Tensor)>,
    ) {
        match computed {
            Some((gw, gb)) => {
                param_grads[param_idx] = gw;
                param_grads[param_idx + 1] = gb;
            }
            None => {
                param_grads[param_idx] = Tensor::zeros(self.params[param_idx].shape().to_vec());
                param_grads[param_idx + 1] =
                    Tensor::zeros(self.params[param_idx + 1].shape().to_vec());
            }
        }
    }

    /// Class scores for a single `[c, h, w]` image.
    pub fn scores_for(&self, image: &Tensor) -> Result<Tensor> {
        let mut shape = vec![1];
        shape.extend_from_slice(image.shape());
        let batch = image.reshape(shape)?;
        let (scores, _) = self.forward(&batch)?;
        scores.reshape(vec![self.num_classes])
    }

    /// Predicted class of a single image; ties break toward the lowest index.
    pub fn predict(&self, image: &Tensor) -> Result<usize> {
        Ok(argmax(self.scores_for(image)?.data()))
    }

    /// Mini-batch SGD over the unfrozen parameters. Returns the mean
    /// training loss per epoch. Deterministic for a given seed.
    pub fn sgd_train(
        &mut self,
        train: &Dataset,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        rng: &mut Rng,
    ) -> Result<Vec<f64>> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if learning_rate < 0.0 || !learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let n = train.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_losses = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for (batch_no, chunk) in order.chunks(batch_size).enumerate() {
                let (batch, labels) = train.gather(chunk);
                let (scores, cache) = self.forward(&batch)?;
                let (loss, grad_scores) = self.loss(&scores, &labels)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_no,
                    });
                }
                loss_sum += loss * chunk.len() as f64;
                let (param_grads, _) = self.backward(&cache, &grad_scores)?;
                self.revision += 1;
                for ((param, grad), &frozen) in
                    self.params.iter_mut().zip(&param_grads).zip(&self.frozen)
                {
                    if frozen {
                        continue;
                    }
                    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
                        *p -= learning_rate * g;
                    }
                }
            }
            epoch_losses.push(loss_sum / n as f64);
        }
        Ok(epoch_losses)
    }

    /// Fraction of examples predicted correctly.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0;
        for i in 0..data.len() {
            if self.predict(&data.image(i))? == data.label(i) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

fn uniform_init(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.next_range(-limit, limit)).collect();
    Tensor::new(shape, data).expect("init shape")
}

/// Index of the largest value; ties break toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of one score row.
pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}
