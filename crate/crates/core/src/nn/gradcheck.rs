//! Central finite-difference verification of backpropagated gradients.

use serde::Serialize;

use super::loss::cross_entropy;
use super::network::{Gradients, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Networks larger than this are refused: every parameter is perturbed twice.
pub const MAX_CHECKED_PARAMS: usize = 10_000;

/// Gradients smaller than this in both routes count as agreeing.
const ABS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCheck {
    pub layer: usize,
    pub kind: &'static str,
    pub params: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a − n| / max(|a|, |n|)`, zero when both are below the absolute floor.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if (analytic - numeric).abs() <= ABS_FLOOR {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Analytic gradient of the cross-entropy loss for one sample.
pub fn analytic_gradients(net: &Network<f64>, inputs: &[&Tensor<f64>], truth: &[f64]) -> Result<Gradients<f64>> {
    let mut work = net.clone();
    let pred = work.forward(inputs)?;
    let mut grads = work.zero_grads();
    work.backward_cross_entropy(&pred, truth, &mut grads)?;
    Ok(grads)
}

/// Runs backprop and compares it against central differences for every parameter.
pub fn gradient_check(
    net: &Network<f64>,
    inputs: &[&Tensor<f64>],
    truth: &[f64],
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(net, inputs, truth)?;
    compare_gradients(net, inputs, truth, &analytic, epsilon, tolerance)
}

/// Compares externally supplied gradients against central differences.
pub fn compare_gradients(
    net: &Network<f64>,
    inputs: &[&Tensor<f64>],
    truth: &[f64],
    analytic: &Gradients<f64>,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if net.param_count() > MAX_CHECKED_PARAMS {
        return Err(Error::invalid(format!(
            "{} parameters exceed the gradient-check limit of {MAX_CHECKED_PARAMS}",
            net.param_count()
        )));
    }
    let layer_meta: Vec<(usize, &'static str, usize)> = net
        .layers()
        .enumerate()
        .filter(|(_, l)| l.has_params())
        .map(|(i, l)| (i, l.kind().name(), l.param_count()))
        .collect();
    let analytic: Vec<&[f64]> = analytic.tensors().collect();
    let mut probe = net.clone();
    let mut errors = vec![0.0f64; layer_meta.len()];
    let lengths: Vec<usize> = probe.params_mut().iter().map(|p| p.len()).collect();
    if lengths.len() != analytic.len() || lengths.iter().zip(&analytic).any(|(n, a)| *n != a.len()) {
        return Err(Error::invalid("gradient buffers do not match the network"));
    }

    for (t, &len) in lengths.iter().enumerate() {
        for i in 0..len {
            let original = probe.params_mut()[t][i];
            probe.params_mut()[t][i] = original + epsilon;
            let plus = cross_entropy(&probe.predict(inputs)?, truth)?;
            probe.params_mut()[t][i] = original - epsilon;
            let minus = cross_entropy(&probe.predict(inputs)?, truth)?;
            probe.params_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = relative_error(analytic[t][i], numeric);
            let slot = &mut errors[t / 2];
            *slot = slot.max(err);
        }
    }

    let layers: Vec<LayerCheck> = layer_meta
        .into_iter()
        .zip(errors)
        .map(|((layer, kind, params), max_rel_error)| LayerCheck {
            layer,
            kind,
            params,
            max_rel_error,
        })
        .collect();
    let max_rel_error = layers.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        layers,
        max_rel_error,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}
