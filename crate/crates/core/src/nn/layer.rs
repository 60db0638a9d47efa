use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{self, ConvGeometry, Padding, PoolIndex, Scalar, Tensor};

/// Layer type and the sizes that fix its parameter shapes.
///
/// Convolutions are 3-D cross-correlations with `same` padding and stride 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
    },
    MaxPool2,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Softmax,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::MaxPool2 => "maxpool2",
            LayerKind::Flatten => "flatten",
            LayerKind::Dense { .. } => "dense",
            LayerKind::Relu => "relu",
            LayerKind::Softmax => "softmax",
        }
    }

    /// `(weight shape, bias length)` for layers that carry parameters.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerKind::Conv {
                kernel,
                in_channels,
                out_channels,
            } => Some((vec![kernel, kernel, in_channels, out_channels], out_channels)),
            LayerKind::Dense { inputs, outputs } => Some((vec![inputs, outputs], outputs)),
            _ => None,
        }
    }

    /// Output shape for a given input shape, or a shape error.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerKind::Conv {
                kernel,
                in_channels,
                out_channels,
            } => match *input {
                [h, w, c] if c == in_channels => {
                    ConvGeometry::new((h, w, c), kernel, out_channels, Padding::Same, 1)?;
                    Ok(vec![h, w, out_channels])
                }
                _ => Err(Error::Shape(format!(
                    "conv expects [H, W, {in_channels}], got {input:?}"
                ))),
            },
            LayerKind::MaxPool2 => match *input {
                [h, w, c] => Ok(vec![h.div_ceil(2), w.div_ceil(2), c]),
                _ => Err(Error::Shape(format!("maxpool expects an image, got {input:?}"))),
            },
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::Dense { inputs, outputs } => {
                if input.iter().product::<usize>() == inputs && input.len() == 1 {
                    Ok(vec![outputs])
                } else {
                    Err(Error::Shape(format!(
                        "dense expects [{inputs}], got {input:?}"
                    )))
                }
            }
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Softmax => {
                if input.len() == 1 {
                    Ok(input.to_vec())
                } else {
                    Err(Error::Shape(format!("softmax expects a vector, got {input:?}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Cache<T: Scalar> {
    Conv { geom: ConvGeometry, input: Vec<T> },
    Pool(PoolIndex),
    Flatten(Vec<usize>),
    Dense(Vec<T>),
    Relu(Tensor<T>),
    Softmax(Vec<T>),
}

/// Gradient buffers for one parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T: Scalar> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Layer<T: Scalar = f32> {
    kind: LayerKind,
    weight: Option<Tensor<T>>,
    bias: Option<Tensor<T>>,
    cache: Option<Cache<T>>,
}

impl<T: Scalar> PartialEq for Layer<T> {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.weight == other.weight && self.bias == other.bias
    }
}

impl<T: Scalar> Layer<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(kind: LayerKind, rng: &mut R) -> Self {
        let (weight, bias) = match kind.param_shapes() {
            Some((wshape, blen)) => {
                let (fan_in, fan_out) = match kind {
                    LayerKind::Conv {
                        kernel,
                        in_channels,
                        out_channels,
                    } => (kernel * kernel * in_channels, kernel * kernel * out_channels),
                    LayerKind::Dense { inputs, outputs } => (inputs, outputs),
                    _ => unreachable!(),
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n: usize = wshape.iter().product();
                let data = (0..n)
                    .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
                    .collect();
                (
                    Some(Tensor::new(wshape, data).expect("shape from kind")),
                    Some(Tensor::zeros(&[blen])),
                )
            }
            None => (None, None),
        };
        Layer {
            kind,
            weight,
            bias,
            cache: None,
        }
    }

    /// Builds a layer from stored parameters, checking them against `kind`.
    pub fn from_parts(kind: LayerKind, weight: Option<Tensor<T>>, bias: Option<Tensor<T>>) -> Result<Self> {
        match (kind.param_shapes(), &weight, &bias) {
            (Some((wshape, blen)), Some(w), Some(b)) => {
                if w.shape() != wshape.as_slice() || b.len() != blen {
                    return Err(Error::Shape(format!(
                        "{} parameters {:?}/{:?} do not match {wshape:?}/[{blen}]",
                        kind.name(),
                        w.shape(),
                        b.shape()
                    )));
                }
            }
            (None, None, None) => {}
            _ => {
                return Err(Error::Shape(format!(
                    "{} layer given the wrong set of parameters",
                    kind.name()
                )))
            }
        }
        Ok(Layer {
            kind,
            weight,
            bias,
            cache: None,
        })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn weight(&self) -> Option<&Tensor<T>> {
        self.weight.as_ref()
    }

    pub fn bias(&self) -> Option<&Tensor<T>> {
        self.bias.as_ref()
    }

    pub fn has_params(&self) -> bool {
        self.weight.is_some()
    }

    pub fn param_count(&self) -> usize {
        self.weight.as_ref().map_or(0, |w| w.len()) + self.bias.as_ref().map_or(0, |b| b.len())
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut [T], &mut [T])> {
        match (&mut self.weight, &mut self.bias) {
            (Some(w), Some(b)) => Some((w.data_mut(), b.data_mut())),
            _ => None,
        }
    }

    pub fn zero_grads(&self) -> Option<ParamGrads<T>> {
        self.weight.as_ref().map(|w| ParamGrads {
            weight: vec![T::ZERO; w.len()],
            bias: vec![T::ZERO; self.bias.as_ref().map_or(0, |b| b.len())],
        })
    }

    pub(crate) fn cast<U: Scalar>(&self) -> Layer<U> {
        Layer {
            kind: self.kind,
            weight: self.weight.as_ref().map(|w| w.cast()),
            bias: self.bias.as_ref().map(|b| b.cast()),
            cache: None,
        }
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }

    /// Consumes the cached output of a softmax layer.
    pub(crate) fn take_softmax_output(&mut self) -> Result<Vec<T>> {
        match self.cache.take() {
            Some(Cache::Softmax(y)) => Ok(y),
            _ => Err(Error::StaleCache(self.kind.name().to_string())),
        }
    }

    /// Forward pass on one sample that records what backward needs.
    pub fn forward(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let y = self.forward_batch(add_batch_dim(x)?)?;
        drop_batch_dim(y)
    }

    /// Forward pass on an immutable layer.
    pub fn apply(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        drop_batch_dim(self.apply_batch(add_batch_dim(x)?)?)
    }

    /// Consumes the forward cache, accumulates parameter gradients into `grads`
    /// and returns the gradient with respect to the layer input when asked.
    pub fn backward(
        &mut self,
        grad: Tensor<T>,
        grads: Option<&mut ParamGrads<T>>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        self.backward_batch(add_batch_dim(grad)?, grads, need_input_grad)?
            .map(drop_batch_dim)
            .transpose()
    }

    /// [`Layer::forward`] on a batch with a leading sample dimension.
    pub fn forward_batch(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = self.run(x, true)?;
        self.cache = cache;
        Ok(y)
    }

    /// [`Layer::apply`] on a batch with a leading sample dimension.
    pub fn apply_batch(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, false)?.0)
    }

    fn run(&self, x: Tensor<T>, keep: bool) -> Result<(Tensor<T>, Option<Cache<T>>)> {
        let (n, sample) = split_batch(x.shape())?;
        let mut out_shape = vec![n];
        out_shape.extend(self.kind.output_shape(sample)?);
        match self.kind {
            LayerKind::Conv {
                kernel,
                out_channels,
                ..
            } => {
                let w = self.weight.as_ref().expect("conv weight");
                let b = self.bias.as_ref().expect("conv bias");
                let geom = ConvGeometry::new((sample[0], sample[1], sample[2]), kernel, out_channels, Padding::Same, 1)?;
                let (positions, plen) = (geom.positions(), geom.patch_len());
                let mut cols = vec![T::ZERO; positions * plen];
                let mut out = vec![T::ZERO; n * positions * out_channels];
                for (image, o) in x.data().chunks_exact(x.len() / n).zip(out.chunks_exact_mut(positions * out_channels)) {
                    geom.im2col_into(image, &mut cols);
                    for row in o.chunks_exact_mut(out_channels) {
                        row.copy_from_slice(b.data());
                    }
                    tensor::gemm(positions, plen, out_channels, &cols, false, w.data(), false, o, true);
                }
                if !out.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("conv"));
                }
                let y = Tensor::new(out_shape, out)?;
                Ok((y, keep.then(|| Cache::Conv { geom, input: x.into_data() })))
            }
            LayerKind::MaxPool2 => {
                let (y, idx) = tensor::maxpool2_batch(x.data(), x.shape())?;
                Ok((Tensor::new(out_shape, y)?, keep.then_some(Cache::Pool(idx))))
            }
            LayerKind::Flatten => {
                let shape = x.shape().to_vec();
                Ok((x.reshape(&out_shape)?, keep.then_some(Cache::Flatten(shape))))
            }
            LayerKind::Dense { inputs, outputs } => {
                let w = self.weight.as_ref().expect("dense weight");
                let b = self.bias.as_ref().expect("dense bias");
                let out = tensor::gemm_bias(x.data(), w.data(), Some(b.data()), inputs, outputs);
                if !out.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite("dense"));
                }
                let y = Tensor::new(out_shape, out)?;
                Ok((y, keep.then(|| Cache::Dense(x.into_data()))))
            }
            LayerKind::Relu => {
                let y = tensor::relu(&x)?;
                Ok((y, keep.then_some(Cache::Relu(x))))
            }
            LayerKind::Softmax => {
                let y: Vec<T> = x.data().chunks_exact(sample[0]).flat_map(softmax).collect();
                let cache = keep.then(|| Cache::Softmax(y.clone()));
                Ok((Tensor::new(out_shape, y)?, cache))
            }
        }
    }

    /// [`Layer::backward`] on a batch; parameter gradients are summed over the batch.
    pub fn backward_batch(
        &mut self,
        grad: Tensor<T>,
        grads: Option<&mut ParamGrads<T>>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::StaleCache(self.kind.name().to_string()))?;
        let n = split_batch(grad.shape())?.0;
        match (self.kind, cache) {
            (LayerKind::Conv { out_channels, .. }, Cache::Conv { geom, input }) => {
                let (positions, plen) = (geom.positions(), geom.patch_len());
                let per_image = geom.in_h * geom.in_w * geom.in_c;
                let w = self.weight.as_ref().expect("conv weight");
                let mut grads = grads;
                let mut cols = vec![T::ZERO; positions * plen];
                let mut dx = if need_input_grad { vec![T::ZERO; n * per_image] } else { Vec::new() };
                for (i, (image, g)) in input
                    .chunks_exact(per_image)
                    .zip(grad.data().chunks_exact(positions * out_channels))
                    .enumerate()
                {
                    if let Some(pg) = grads.as_deref_mut() {
                        geom.im2col_into(image, &mut cols);
                        tensor::gemm_at_b_acc(&cols, g, plen, out_channels, &mut pg.weight);
                        sum_rows_into(g, &mut pg.bias);
                    }
                    if need_input_grad {
                        tensor::gemm(positions, out_channels, plen, g, false, w.data(), true, &mut cols, false);
                        geom.col2im_into(&cols, &mut dx[i * per_image..(i + 1) * per_image]);
                    }
                }
                if !need_input_grad {
                    return Ok(None);
                }
                Ok(Some(Tensor::new(vec![n, geom.in_h, geom.in_w, geom.in_c], dx)?))
            }
            (LayerKind::MaxPool2, Cache::Pool(idx)) => {
                Ok(Some(tensor::maxpool2_backward(&grad, &idx)?))
            }
            (LayerKind::Flatten, Cache::Flatten(shape)) => Ok(Some(grad.reshape(&shape)?)),
            (LayerKind::Dense { inputs, outputs }, Cache::Dense(x)) => {
                if let Some(g) = grads {
                    tensor::gemm_at_b_acc(&x, grad.data(), inputs, outputs, &mut g.weight);
                    sum_rows_into(grad.data(), &mut g.bias);
                }
                if !need_input_grad {
                    return Ok(None);
                }
                let w = self.weight.as_ref().expect("dense weight");
                let dx = tensor::gemm_a_bt(grad.data(), w.data(), inputs, outputs);
                Ok(Some(Tensor::new(vec![n, inputs], dx)?))
            }
            (LayerKind::Relu, Cache::Relu(pre)) => Ok(Some(tensor::relu_grad(&pre, &grad)?)),
            (LayerKind::Softmax, Cache::Softmax(y)) => {
                let classes = y.len() / n;
                let mut dx = Vec::with_capacity(y.len());
                for (g, p) in grad.data().chunks_exact(classes).zip(y.chunks_exact(classes)) {
                    // dx = y ⊙ (g − ⟨g, y⟩)
                    let gy: f64 = g.iter().zip(p).map(|(g, p)| g.to_f64() * p.to_f64()).sum();
                    dx.extend(g.iter().zip(p).map(|(g, p)| T::from_f64(p.to_f64() * (g.to_f64() - gy))));
                }
                Ok(Some(Tensor::new(grad.shape().to_vec(), dx)?))
            }
            _ => Err(Error::StaleCache(self.kind.name().to_string())),
        }
    }
}

/// `(batch size, per-sample shape)` of a batch tensor.
fn split_batch(shape: &[usize]) -> Result<(usize, &[usize])> {
    match shape {
        [n, sample @ ..] if !sample.is_empty() => Ok((*n, sample)),
        _ => Err(Error::Shape(format!("expected a batch with a leading sample dimension, got {shape:?}"))),
    }
}

fn add_batch_dim<T: Scalar>(x: Tensor<T>) -> Result<Tensor<T>> {
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    x.reshape(&shape)
}

fn drop_batch_dim<T: Scalar>(x: Tensor<T>) -> Result<Tensor<T>> {
    let shape = x.shape()[1..].to_vec();
    x.reshape(&shape)
}

/// Adds every `acc.len()`-wide row of `rows` into `acc`.
fn sum_rows_into<T: Scalar>(rows: &[T], acc: &mut [T]) {
    for row in rows.chunks_exact(acc.len()) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

/// Numerically stable softmax, computed in `f64`.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| T::from_f64(e / total)).collect()
}
