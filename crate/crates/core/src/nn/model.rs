use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::arch::{Architecture, LayerSpec};
use crate::autodiff::{window_out, Gradients, ParamId, Tape, Var};
use crate::{Error, Real, Result, Tensor};

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d {
        weight: ParamId,
        bias: ParamId,
        stride: usize,
        padding: usize,
    },
    Dense {
        weight: ParamId,
        bias: ParamId,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    Flatten,
    Softmax,
}

/// Class probabilities and the arg-max class (lowest index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub class: usize,
}

/// Sequential classifier ending in a softmax over `classes` outputs.
///
/// Parameter order is the order of the layers in the architecture (weight
/// before bias) and is stable across checkpoints.
#[derive(Debug)]
pub struct Model {
    arch: Architecture,
    layers: Vec<Layer>,
    params: Vec<Parameter>,
    forward_passes: AtomicUsize,
    backward_passes: AtomicUsize,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Model {
            arch: self.arch.clone(),
            layers: self.layers.clone(),
            params: self.params.clone(),
            forward_passes: AtomicUsize::new(0),
            backward_passes: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.params == other.params
    }
}

enum Shape {
    Image([usize; 3]),
    Flat(usize),
}

impl Model {
    /// Builds the model and draws weights uniformly in `±sqrt(6 / fan_in)`;
    /// biases start at zero.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(arch, |shape, fan_in| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            (0..n).map(|_| rng.random_range(-bound..bound) as Real).collect()
        })
    }

    /// Builds the model with every parameter set to zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        Self::build(arch, |shape, _| vec![0.0; shape.iter().product()])
    }

    fn build(arch: Architecture, mut init: impl FnMut(&[usize], usize) -> Vec<Real>) -> Result<Self> {
        let bad = |msg: String| Error::invalid(format!("architecture {:?}: {msg}", arch.name));
        if arch.input.contains(&0) || arch.classes < 2 {
            return Err(bad("input dimensions must be positive and classes >= 2".into()));
        }
        let mut shape = Shape::Image(arch.input);
        let mut layers = Vec::new();
        let mut params = Vec::new();
        let (mut convs, mut denses) = (0, 0);
        for (i, spec) in arch.layers.iter().enumerate() {
            if matches!(spec, LayerSpec::Softmax) != (i + 1 == arch.layers.len()) {
                return Err(bad("softmax must be the final layer, and only the final layer".into()));
            }
            let layer = match (*spec, &shape) {
                (LayerSpec::Conv2d { filters, kernel, stride, padding }, Shape::Image([c, h, w])) => {
                    let oh = window_out(*h, kernel, stride, padding);
                    let ow = window_out(*w, kernel, stride, padding);
                    let (Some(oh), Some(ow)) = (oh, ow) else {
                        return Err(bad(format!("conv2d at layer {i} does not fit input {h}x{w}")));
                    };
                    if filters == 0 {
                        return Err(bad(format!("conv2d at layer {i} has zero filters")));
                    }
                    convs += 1;
                    let wshape = vec![filters, *c, kernel, kernel];
                    let fan_in = c * kernel * kernel;
                    let weight = push_param(&mut params, format!("conv{convs}.weight"), &wshape, &mut init, fan_in)?;
                    let bias = push_param(&mut params, format!("conv{convs}.bias"), &[filters], &mut |s, _| vec![0.0; s[0]], fan_in)?;
                    shape = Shape::Image([filters, oh, ow]);
                    Layer::Conv2d { weight, bias, stride, padding }
                }
                (LayerSpec::Dense { units }, Shape::Flat(d)) => {
                    if units == 0 {
                        return Err(bad(format!("dense at layer {i} has zero units")));
                    }
                    denses += 1;
                    let d = *d;
                    let weight = push_param(&mut params, format!("dense{denses}.weight"), &[d, units], &mut init, d)?;
                    let bias = push_param(&mut params, format!("dense{denses}.bias"), &[units], &mut |s, _| vec![0.0; s[0]], d)?;
                    shape = Shape::Flat(units);
                    Layer::Dense { weight, bias }
                }
                (LayerSpec::Maxpool { size, stride }, Shape::Image([c, h, w])) => {
                    let stride = stride.unwrap_or(size);
                    let oh = window_out(*h, size, stride, 0);
                    let ow = window_out(*w, size, stride, 0);
                    let (Some(oh), Some(ow)) = (oh, ow) else {
                        return Err(bad(format!("maxpool at layer {i} does not fit input {h}x{w}")));
                    };
                    shape = Shape::Image([*c, oh, ow]);
                    Layer::MaxPool { size, stride }
                }
                (LayerSpec::Flatten, Shape::Image([c, h, w])) => {
                    shape = Shape::Flat(c * h * w);
                    Layer::Flatten
                }
                (LayerSpec::Flatten, Shape::Flat(_)) => Layer::Flatten,
                (LayerSpec::Relu, _) => Layer::Relu,
                (LayerSpec::Softmax, Shape::Flat(d)) if *d == arch.classes => Layer::Softmax,
                (spec, _) => return Err(bad(format!("layer {i} ({spec:?}) does not fit its input"))),
            };
            layers.push(layer);
        }
        if !matches!(layers.last(), Some(Layer::Softmax)) {
            return Err(bad("missing final softmax".into()));
        }
        Ok(Model {
            arch,
            layers,
            params,
            forward_passes: AtomicUsize::new(0),
            backward_passes: AtomicUsize::new(0),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.arch.input
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Number of parameter tensors (the GraN feature length).
    pub fn param_tensor_count(&self) -> usize {
        self.params.len()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    /// Replaces parameter values (names and shapes must match in order).
    pub(crate) fn set_params(&mut self, values: Vec<Parameter>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (have, new) in self.params.iter().zip(&values) {
            if have.name != new.name || have.value.shape() != new.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    new.name,
                    new.value.shape(),
                    have.name,
                    have.value.shape()
                )));
            }
        }
        self.params = values;
        Ok(())
    }

    /// SHA-256 over the architecture and every parameter value (hex, 16 bytes).
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.arch.to_toml().as_bytes());
        for p in &self.params {
            h.update(p.name.as_bytes());
            for d in p.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                h.update((*v as f64).to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..16])
    }

    pub fn forward_passes(&self) -> usize {
        self.forward_passes.load(Ordering::Relaxed)
    }

    pub fn backward_passes(&self) -> usize {
        self.backward_passes.load(Ordering::Relaxed)
    }

    pub fn reset_pass_counters(&self) {
        self.forward_passes.store(0, Ordering::Relaxed);
        self.backward_passes.store(0, Ordering::Relaxed);
    }

    /// Accepts `[C, H, W]` or `[N, C, H, W]` and returns `[N, C, H, W]`.
    fn batched(&self, x: &Tensor) -> Result<Tensor> {
        let [c, h, w] = self.arch.input;
        let s = x.shape();
        let ok = (s.len() == 3 && s == [c, h, w]) || (s.len() == 4 && s[1..] == [c, h, w]);
        if !ok {
            return Err(Error::ShapeMismatch {
                op: "model input",
                lhs: s.to_vec(),
                rhs: vec![c, h, w],
            });
        }
        let n = if s.len() == 4 { s[0] } else { 1 };
        x.clone().reshape(&[n, c, h, w])
    }

    /// Records the forward pass up to the logits (the final softmax is left
    /// to the loss). When `activations` is given, the output of every conv or
    /// dense layer, after its ReLU if one follows, is appended to it.
    pub fn forward_on(&self, tape: &mut Tape, input: Var, mut activations: Option<&mut Vec<Var>>) -> Result<Var> {
        self.forward_passes.fetch_add(1, Ordering::Relaxed);
        let mut h = input;
        let mut bound: Vec<Option<Var>> = vec![None; self.params.len()];
        let mut param = |tape: &mut Tape, id: ParamId| -> Var {
            *bound[id.0].get_or_insert_with(|| tape.param(self.params[id.0].value.clone(), id))
        };
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers[..last].iter().enumerate() {
            h = match layer {
                Layer::Conv2d { weight, bias, stride, padding } => {
                    let w = param(tape, *weight);
                    let b = param(tape, *bias);
                    let c = tape.conv2d(h, w, *stride, *padding)?;
                    tape.add_bias(c, b)?
                }
                Layer::Dense { weight, bias } => {
                    let w = param(tape, *weight);
                    let b = param(tape, *bias);
                    let m = tape.matmul(h, w)?;
                    tape.add_bias(m, b)?
                }
                Layer::Relu => tape.relu(h)?,
                Layer::MaxPool { size, stride } => tape.max_pool2d(h, *size, *stride)?,
                Layer::Flatten => tape.flatten(h)?,
                Layer::Softmax => unreachable!("softmax is always last"),
            };
            if let Some(acts) = activations.as_deref_mut() {
                let is_param = matches!(layer, Layer::Conv2d { .. } | Layer::Dense { .. });
                let relu_follows = matches!(self.layers.get(i + 1), Some(Layer::Relu));
                let after_relu = matches!(layer, Layer::Relu)
                    && i > 0
                    && matches!(self.layers[i - 1], Layer::Conv2d { .. } | Layer::Dense { .. });
                if (is_param && !relu_follows) || after_relu {
                    acts.push(h);
                }
            }
        }
        Ok(h)
    }

    /// Runs [`Tape::backward`] and counts the pass.
    pub fn backward(&self, tape: &Tape, loss: Var) -> Result<Gradients> {
        self.backward_passes.fetch_add(1, Ordering::Relaxed);
        tape.backward(loss)
    }

    /// Logits `[N, classes]` for `[C, H, W]` or `[N, C, H, W]` input.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let input = tape.constant(self.batched(x)?);
        let z = self.forward_on(&mut tape, input, None)?;
        Ok(tape.value(z).clone())
    }

    /// `F(x)` and its arg-max for a single `[C, H, W]` image.
    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        let mut preds = self.predict_batch(&[x])?;
        Ok(preds.remove(0))
    }

    pub fn predict_batch(&self, xs: &[&Tensor]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(128) {
            let batch = Tensor::stack(chunk)?;
            let logits = self.logits(&batch)?;
            let classes = self.arch.classes;
            for row in logits.data().chunks(classes) {
                out.push(prediction_from_logits(row));
            }
        }
        Ok(out)
    }

    /// Per-layer activations of a single image, flattened (see [`Model::forward_on`]).
    pub fn activations(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::inference();
        let input = tape.constant(self.batched(x)?);
        let mut acts = Vec::new();
        self.forward_on(&mut tape, input, Some(&mut acts))?;
        Ok(acts
            .into_iter()
            .map(|v| tape.value(v).data().iter().map(|&a| a as f64).collect())
            .collect())
    }

    /// Number of activation layers recorded by [`Model::activations`].
    pub fn activation_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Conv2d { .. } | Layer::Dense { .. }))
            .count()
    }

    /// Mean softmax cross-entropy over a batch and its parameter gradients.
    pub fn loss_and_gradients(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Gradients)> {
        let mut tape = Tape::new();
        let input = tape.constant(self.batched(x)?);
        let z = self.forward_on(&mut tape, input, None)?;
        let loss = tape.softmax_cross_entropy(z, labels)?;
        let grads = self.backward(&tape, loss)?;
        Ok((tape.value(loss).data()[0] as f64, grads))
    }

    /// Gradient of a scalar built from the logits with respect to the input
    /// image. Returns the logits and `d objective / d x` shaped like `x`.
    pub fn input_gradient(
        &self,
        x: &Tensor,
        objective: impl FnOnce(&mut Tape, Var) -> Result<Var>,
    ) -> Result<(Vec<f64>, Tensor)> {
        let mut tape = Tape::new();
        let input = tape.variable(self.batched(x)?);
        let z = self.forward_on(&mut tape, input, None)?;
        let logits: Vec<f64> = tape.value(z).data().iter().map(|&v| v as f64).collect();
        let obj = objective(&mut tape, z)?;
        let grads = self.backward(&tape, obj)?;
        let g = grads
            .wrt(input)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(input).shape()))
            .reshape(x.shape())?;
        Ok((logits, g))
    }

    /// Gradients of several fixed linear combinations of the logits with
    /// respect to the input, from one forward pass. Each entry of `rows` has
    /// `classes` weights.
    pub fn logit_gradients(&self, x: &Tensor, rows: &[Vec<Real>]) -> Result<(Vec<f64>, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let input = tape.variable(self.batched(x)?);
        let z = self.forward_on(&mut tape, input, None)?;
        let logits: Vec<f64> = tape.value(z).data().iter().map(|&v| v as f64).collect();
        let objectives = rows
            .iter()
            .map(|w| tape.weighted_sum(z, w))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(rows.len());
        for obj in objectives {
            let grads = self.backward(&tape, obj)?;
            let g = grads
                .wrt(input)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.value(input).shape()));
            out.push(g.reshape(x.shape())?);
        }
        Ok((logits, out))
    }
}

pub(crate) fn prediction_from_logits(logits: &[Real]) -> Prediction {
    let max = logits.iter().copied().fold(Real::NEG_INFINITY, Real::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) as f64).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.into_iter().map(|e| e / total).collect();
    let class = crate::tensor::argmax(logits);
    Prediction { probs, class }
}

fn push_param(
    params: &mut Vec<Parameter>,
    name: String,
    shape: &[usize],
    init: &mut impl FnMut(&[usize], usize) -> Vec<Real>,
    fan_in: usize,
) -> Result<ParamId> {
    let value = Tensor::new(shape.to_vec(), init(shape, fan_in))?;
    params.push(Parameter { name, value });
    Ok(ParamId(params.len() - 1))
}
