use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerKind, ParamGrads};
use super::loss::{cross_entropy_grad, one_hot_index};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Image shape one input branch expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl InputSpec {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        InputSpec {
            height,
            width,
            channels,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }
}

/// Layer kinds of a network, branch by branch, without parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub inputs: Vec<InputSpec>,
    pub branches: Vec<Vec<LayerKind>>,
    pub head: Vec<LayerKind>,
}

impl Architecture {
    /// Checks the shape chain and returns the output length.
    pub fn validate(&self) -> Result<usize> {
        if self.inputs.is_empty() || self.inputs.len() != self.branches.len() {
            return Err(Error::Shape(format!(
                "{} inputs for {} branches",
                self.inputs.len(),
                self.branches.len()
            )));
        }
        let mut features = 0;
        for (spec, branch) in self.inputs.iter().zip(&self.branches) {
            let mut shape = spec.shape().to_vec();
            for kind in branch {
                shape = kind.output_shape(&shape)?;
            }
            if shape.len() != 1 {
                return Err(Error::Shape(format!(
                    "branch must end flattened, ends at {shape:?}"
                )));
            }
            features += shape[0];
        }
        let mut shape = vec![features];
        for kind in &self.head {
            shape = kind.output_shape(&shape)?;
        }
        let last = self.head.last().or_else(|| self.branches.last()?.last());
        if last != Some(&LayerKind::Softmax) {
            return Err(Error::Shape("network must end with softmax".into()));
        }
        Ok(shape[0])
    }
}

/// Flat gradient buffers, one per parameterised layer in canonical order
/// (branches first, then the head).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Scalar = f32> {
    pub layers: Vec<ParamGrads<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zero(&mut self) {
        for g in &mut self.layers {
            g.weight.iter_mut().for_each(|v| *v = T::ZERO);
            g.bias.iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    /// Weight then bias buffer of every layer, in canonical order.
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weight.as_slice(), g.bias.as_slice()])
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Feed-forward classifier with one or more input branches whose flattened
/// outputs are concatenated before a shared head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f32> {
    inputs: Vec<InputSpec>,
    branches: Vec<Vec<Layer<T>>>,
    head: Vec<Layer<T>>,
    branch_features: Vec<usize>,
    outputs: usize,
}

impl<T: Scalar> Network<T> {
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let branches = arch
            .branches
            .iter()
            .map(|b| b.iter().map(|&k| Layer::init(k, rng)).collect())
            .collect();
        let head = arch.head.iter().map(|&k| Layer::init(k, rng)).collect();
        Self::assemble(arch, branches, head)
    }

    /// Rebuilds a network from parameter-carrying layers.
    pub fn from_layers(arch: &Architecture, layers: Vec<Layer<T>>) -> Result<Self> {
        arch.validate()?;
        let mut it = layers.into_iter();
        let mut branches = Vec::new();
        for kinds in &arch.branches {
            let branch: Vec<Layer<T>> = it.by_ref().take(kinds.len()).collect();
            if branch.iter().map(|l| l.kind()).ne(kinds.iter().copied()) {
                return Err(Error::Shape("layer kinds do not match architecture".into()));
            }
            branches.push(branch);
        }
        let head: Vec<Layer<T>> = it.by_ref().collect();
        if head.iter().map(|l| l.kind()).ne(arch.head.iter().copied()) {
            return Err(Error::Shape("head layers do not match architecture".into()));
        }
        Self::assemble(arch, branches, head)
    }

    fn assemble(arch: &Architecture, branches: Vec<Vec<Layer<T>>>, head: Vec<Layer<T>>) -> Result<Self> {
        let outputs = arch.validate()?;
        let branch_features = arch
            .inputs
            .iter()
            .zip(&arch.branches)
            .map(|(spec, kinds)| {
                kinds
                    .iter()
                    .try_fold(spec.shape().to_vec(), |s, k| k.output_shape(&s))
                    .map(|s| s[0])
            })
            .collect::<Result<_>>()?;
        Ok(Network {
            inputs: arch.inputs.clone(),
            branches,
            head,
            branch_features,
            outputs,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            inputs: self.inputs.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| b.iter().map(|l| l.kind()).collect())
                .collect(),
            head: self.head.iter().map(|l| l.kind()).collect(),
        }
    }

    pub fn inputs(&self) -> &[InputSpec] {
        &self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// All layers in canonical order.
    pub fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.branches.iter().flatten().chain(&self.head)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.branches.iter_mut().flatten().chain(&mut self.head)
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.param_count()).sum()
    }

    pub fn zero_grads(&self) -> Gradients<T> {
        Gradients {
            layers: self.layers().filter_map(|l| l.zero_grads()).collect(),
        }
    }

    /// Weight and bias buffers of every parameterised layer, in the order of [`Gradients`].
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .filter_map(|l| l.params_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers()
            .filter(|l| l.has_params())
            .flat_map(|l| [l.weight().unwrap().data(), l.bias().unwrap().data()])
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            inputs: self.inputs.clone(),
            branches: self
                .branches
                .iter()
                .map(|b| b.iter().map(|l| l.cast()).collect())
                .collect(),
            head: self.head.iter().map(|l| l.cast()).collect(),
            branch_features: self.branch_features.clone(),
            outputs: self.outputs,
        }
    }

    /// Batch size of `inputs`, each shaped `[n, height, width, channels]`.
    fn check_batch(&self, inputs: &[&Tensor<T>]) -> Result<usize> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::BranchCount {
                expected: self.inputs.len(),
                got: inputs.len(),
            });
        }
        let n = inputs.first().map_or(0, |x| x.shape()[0]);
        for (x, spec) in inputs.iter().zip(&self.inputs) {
            if x.shape() != [n, spec.height, spec.width, spec.channels] {
                return Err(Error::Dimension {
                    op: "network input",
                    left: x.shape().to_vec(),
                    right: spec.shape().to_vec(),
                });
            }
        }
        Ok(n)
    }

    /// One sample as a batch of one.
    fn single(inputs: &[&Tensor<T>]) -> Result<Vec<Tensor<T>>> {
        inputs
            .iter()
            .map(|x| {
                let (h, w, c) = x.image_dims()?;
                Tensor::new(vec![1, h, w, c], x.data().to_vec())
            })
            .collect()
    }

    /// Interleaves per-branch feature rows into one `[n, total]` tensor.
    fn join_features(&self, n: usize, parts: Vec<Tensor<T>>) -> Result<Tensor<T>> {
        if let [only] = &parts[..] {
            let total = only.len() / n.max(1);
            return parts.into_iter().next().unwrap().reshape(&[n, total]);
        }
        let total: usize = self.branch_features.iter().sum();
        let mut features = Vec::with_capacity(n * total);
        for i in 0..n {
            for (part, &width) in parts.iter().zip(&self.branch_features) {
                features.extend_from_slice(&part.data()[i * width..(i + 1) * width]);
            }
        }
        Tensor::new(vec![n, total], features)
    }

    /// Training forward pass on a batch; fills the layer caches used by the
    /// backward passes. Returns `[n, outputs]` probabilities.
    pub fn forward_batch(&mut self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let n = self.check_batch(inputs)?;
        let mut parts = Vec::with_capacity(inputs.len());
        for (branch, x) in self.branches.iter_mut().zip(inputs) {
            let mut h = (*x).clone();
            for layer in branch.iter_mut() {
                h = layer.forward_batch(h)?;
            }
            parts.push(h);
        }
        let mut h = self.join_features(n, parts)?;
        for layer in &mut self.head {
            h = layer.forward_batch(h)?;
        }
        Ok(h)
    }

    /// Inference on a batch with an immutable network.
    pub fn predict_batch(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let n = self.check_batch(inputs)?;
        let mut parts = Vec::with_capacity(inputs.len());
        for (branch, x) in self.branches.iter().zip(inputs) {
            let mut h = (*x).clone();
            for layer in branch {
                h = layer.apply_batch(h)?;
            }
            parts.push(h);
        }
        let mut h = self.join_features(n, parts)?;
        for layer in &self.head {
            h = layer.apply_batch(h)?;
        }
        Ok(h)
    }

    /// Training forward pass on one sample.
    pub fn forward(&mut self, inputs: &[&Tensor<T>]) -> Result<Vec<T>> {
        let batch = Self::single(inputs)?;
        let refs: Vec<&Tensor<T>> = batch.iter().collect();
        Ok(self.forward_batch(&refs)?.into_data())
    }

    /// Inference on one sample.
    pub fn predict(&self, inputs: &[&Tensor<T>]) -> Result<Vec<T>> {
        let batch = Self::single(inputs)?;
        let refs: Vec<&Tensor<T>> = batch.iter().collect();
        Ok(self.predict_batch(&refs)?.into_data())
    }

    /// Backpropagates `grad_out` (gradient of the loss w.r.t. the output of a
    /// one-sample forward pass) and adds the parameter gradients into `grads`.
    pub fn backward(&mut self, grad_out: &[T], grads: &mut Gradients<T>) -> Result<()> {
        if grad_out.len() != self.outputs {
            return Err(Error::Dimension {
                op: "backward",
                left: vec![grad_out.len()],
                right: vec![self.outputs],
            });
        }
        let head = self.head.len();
        self.backprop(Tensor::new(vec![1, self.outputs], grad_out.to_vec())?, head, grads)
    }

    /// Backpropagates the cross-entropy of `pred` against `truth` for a
    /// one-sample forward pass.
    pub fn backward_cross_entropy(&mut self, pred: &[T], truth: &[T], grads: &mut Gradients<T>) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::Dimension {
                op: "backward_cross_entropy",
                left: vec![pred.len()],
                right: vec![truth.len()],
            });
        }
        if self.ends_in_softmax() {
            self.backward_cross_entropy_batch(truth, grads)
        } else {
            self.backward(&cross_entropy_grad(pred, truth)?, grads)
        }
    }

    fn ends_in_softmax(&self) -> bool {
        matches!(self.head.last().map(|l| l.kind()), Some(LayerKind::Softmax))
    }

    /// Backpropagates the summed cross-entropy of the last batch forward pass
    /// against one-hot `truth` rows. The trailing softmax is differentiated
    /// together with the loss as `y − truth`, which keeps a signal when
    /// probabilities saturate to exactly 0 or 1.
    pub fn backward_cross_entropy_batch(&mut self, truth: &[T], grads: &mut Gradients<T>) -> Result<()> {
        if !self.ends_in_softmax() {
            return Err(Error::Shape("network must end with softmax".into()));
        }
        let classes = self.outputs;
        for row in truth.chunks(classes) {
            one_hot_index(row)?;
        }
        let last = self.head.last_mut().expect("softmax head");
        let y = last.take_softmax_output()?;
        if y.len() != truth.len() {
            return Err(Error::Dimension {
                op: "backward_cross_entropy",
                left: vec![y.len()],
                right: vec![truth.len()],
            });
        }
        let g = y.iter().zip(truth).map(|(p, t)| T::from_f64(p.to_f64() - t.to_f64())).collect();
        let head = self.head.len() - 1;
        self.backprop(Tensor::new(vec![y.len() / classes, classes], g)?, head, grads)
    }

    /// Backpropagates `g` (shaped `[n, width]`) from the output of `head[..head_layers]`.
    fn backprop(&mut self, g: Tensor<T>, head_layers: usize, grads: &mut Gradients<T>) -> Result<()> {
        let n = g.shape()[0];
        let counts: Vec<usize> = self
            .branches
            .iter()
            .map(|b| b.iter().filter(|l| l.has_params()).count())
            .collect();
        let (branch_grads, head_grads) = grads.layers.split_at_mut(counts.iter().sum());

        let mut g = g;
        let mut slots = head_grads.iter_mut().rev();
        for layer in self.head[..head_layers].iter_mut().rev() {
            let slot = if layer.has_params() { slots.next() } else { None };
            g = layer
                .backward_batch(g, slot, true)?
                .expect("input gradient requested");
        }
        let total: usize = self.branch_features.iter().sum();
        let feature_grad = g.into_data();
        let mut offset = 0;
        let mut slot_offset = 0;
        for ((branch, &width), &count) in self.branches.iter_mut().zip(&self.branch_features).zip(&counts) {
            let mut part = Vec::with_capacity(n * width);
            for row in feature_grad.chunks_exact(total) {
                part.extend_from_slice(&row[offset..offset + width]);
            }
            let mut g = Tensor::new(vec![n, width], part)?;
            offset += width;
            let mut slots = branch_grads[slot_offset..slot_offset + count].iter_mut().rev();
            slot_offset += count;
            for (i, layer) in branch.iter_mut().enumerate().rev() {
                let slot = if layer.has_params() { slots.next() } else { None };
                // nothing upstream of the first layer needs a gradient
                match layer.backward_batch(g, slot, i > 0)? {
                    Some(next) if i > 0 => g = next,
                    _ => break,
                }
            }
        }
        Ok(())
    }

    pub fn clear_caches(&mut self) {
        self.layers_mut().for_each(|l| l.clear_cache());
    }
}
