//! Mini-batch training of fusion models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, SamplePair};
use crate::error::{Error, Result};
use crate::eval::confusion_matrix;
use crate::fusion::{
    argmax, build_model_with, derive_weights, splitmix64, Backbone, FusionModel, ModelSpec, NetRole, Paradigm, ParadigmKind,
};
use crate::nn::{cross_entropy, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Per-epoch statistics of one trained network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub network: String,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{:.6},{:.6},{},{}\n",
                e.epoch,
                e.train_loss,
                e.train_accuracy,
                opt(e.val_loss),
                opt(e.val_accuracy)
            ));
        }
        s
    }
}

pub fn sgd_step(params: &mut [&mut [f32]], grads: &[&[f32]], learning_rate: f64, grad_scale: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, &d) in p.iter_mut().zip(g.iter()) {
            *w = (*w as f64 - learning_rate * grad_scale * d as f64) as f32;
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(lengths: impl IntoIterator<Item = usize>) -> Self {
        let lengths: Vec<usize> = lengths.into_iter().collect();
        AdamState {
            m: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            v: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

pub fn adam_step(
    params: &mut [&mut [f32]],
    grads: &[&[f32]],
    state: &mut AdamState,
    learning_rate: f64,
    (beta1, beta2, epsilon): (f64, f64, f64),
    grad_scale: f64,
) {
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((w, &d), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let d = d as f64 * grad_scale;
            *mi = beta1 * *mi + (1.0 - beta1) * d;
            *vi = beta2 * *vi + (1.0 - beta2) * d * d;
            let step = learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + epsilon);
            *w = (*w as f64 - step) as f32;
        }
    }
}

enum OptState {
    Sgd,
    Adam(AdamState, (f64, f64, f64)),
}

/// Batched network inputs for `samples`, one `[n, h, w, c]` tensor per branch.
pub fn role_batch(role: NetRole, samples: &[&SamplePair]) -> Result<Vec<Tensor>> {
    let a: Vec<&Tensor> = samples.iter().map(|s| &s.chip_a).collect();
    let b: Vec<&Tensor> = samples.iter().map(|s| &s.chip_b).collect();
    Ok(match role {
        NetRole::ModalityA => vec![Tensor::stack(&a)?],
        NetRole::ModalityB => vec![Tensor::stack(&b)?],
        NetRole::Early => {
            let stacked = samples
                .iter()
                .map(|s| s.chip_a.concat_channels(&s.chip_b))
                .collect::<Result<Vec<_>>>()?;
            vec![Tensor::stack(&stacked.iter().collect::<Vec<_>>())?]
        }
        NetRole::Joint => vec![Tensor::stack(&a)?, Tensor::stack(&b)?],
    })
}

const PREDICT_CHUNK: usize = 32;

/// Class probabilities of one network for every sample, in order.
pub fn predict_samples(net: &Network, role: NetRole, samples: &[SamplePair]) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(PREDICT_CHUNK) {
        let refs: Vec<&SamplePair> = chunk.iter().collect();
        let inputs = role_batch(role, &refs)?;
        let inputs: Vec<&Tensor> = inputs.iter().collect();
        let probs = net.predict_batch(&inputs)?;
        out.extend(probs.data().chunks_exact(net.outputs()).map(<[f32]>::to_vec));
    }
    Ok(out)
}

fn evaluate_loss(net: &Network, role: NetRole, samples: &[SamplePair]) -> Result<Option<(f64, f64)>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (s, pred) in samples.iter().zip(predict_samples(net, role, samples)?) {
        loss += cross_entropy(&pred, &s.label)?;
        correct += usize::from(argmax(&pred) == s.class_index);
    }
    let n = samples.len() as f64;
    Ok(Some((loss / n, correct as f64 / n)))
}

/// Trains one network on the modality view its role selects.
pub fn train_network(
    net: &mut Network,
    role: NetRole,
    split: &DatasetSplit,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<TrainHistory> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let name = role.name();
    let mut history = TrainHistory {
        network: name.to_string(),
        epochs: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(role.seed(config.seed) ^ 0x5348_5546));
    let mut grads = net.zero_grads();
    let mut opt = match config.optimizer {
        Optimizer::Sgd => OptState::Sgd,
        Optimizer::Adam { beta1, beta2, epsilon } => {
            OptState::Adam(AdamState::new(grads.tensors().map(|t| t.len())), (beta1, beta2, epsilon))
        }
    };
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grads.zero();
            let samples: Vec<&SamplePair> = batch.iter().map(|&i| &split.train[i]).collect();
            let inputs = role_batch(role, &samples)?;
            let refs: Vec<&Tensor> = inputs.iter().collect();
            let probs = net.forward_batch(&refs)?;
            let mut truth = Vec::with_capacity(probs.len());
            for (sample, pred) in samples.iter().zip(probs.data().chunks_exact(net.outputs())) {
                let loss = cross_entropy(pred, &sample.label)?;
                if !loss.is_finite() {
                    net.clear_caches();
                    return Err(Error::Diverged(format!(
                        "{name}: non-finite loss at epoch {epoch}, batch {b}, sample '{}'",
                        sample.id
                    )));
                }
                total_loss += loss;
                correct += usize::from(argmax(pred) == sample.class_index);
                truth.extend_from_slice(&sample.label);
            }
            net.backward_cross_entropy_batch(&truth, &mut grads)?;
            if !grads.all_finite() {
                return Err(Error::Diverged(format!(
                    "{name}: non-finite gradient at epoch {epoch}, batch {b}"
                )));
            }
            let scale = 1.0 / batch.len() as f64;
            let g: Vec<&[f32]> = grads.tensors().collect();
            let mut params = net.params_mut();
            match &mut opt {
                OptState::Sgd => sgd_step(&mut params, &g, config.learning_rate, scale),
                OptState::Adam(state, betas) => adam_step(&mut params, &g, state, config.learning_rate, *betas, scale),
            }
        }
        let n = split.train.len() as f64;
        let val = evaluate_loss(net, role, &split.val)?;
        let record = EpochRecord {
            epoch,
            train_loss: total_loss / n,
            train_accuracy: correct as f64 / n,
            val_loss: val.map(|v| v.0),
            val_accuracy: val.map(|v| v.1),
        };
        on_epoch(name, &record);
        history.epochs.push(record);
    }
    Ok(history)
}

/// Per-class recall of one network on `samples`.
pub fn network_recalls(net: &Network, role: NetRole, samples: &[SamplePair], classes: usize) -> Result<Vec<f64>> {
    let preds = predict_samples(net, role, samples)?;
    let truths: Vec<Vec<f32>> = samples.iter().map(|s| s.label.clone()).collect();
    let cm = confusion_matrix(&preds, &truths, crate::data::class_names(classes))?;
    Ok(cm.recalls())
}

/// Samples used to pick late-fusion weights: validation, or training when
/// there is no validation split.
pub fn weight_selection_samples(split: &DatasetSplit) -> &[SamplePair] {
    if split.val.is_empty() {
        &split.train
    } else {
        &split.val
    }
}

/// Recomputes the weighted late-fusion weights from the two member networks.
pub fn refresh_late_weights(model: &mut FusionModel, split: &DatasetSplit) -> Result<()> {
    if let Paradigm::LateWeighted(_) = model.paradigm {
        let samples = weight_selection_samples(split);
        let classes = model.spec.classes;
        let ra = network_recalls(&model.nets[0], NetRole::ModalityA, samples, classes)?;
        let rb = network_recalls(&model.nets[1], NetRole::ModalityB, samples, classes)?;
        model.paradigm = Paradigm::LateWeighted(derive_weights(&ra, &rb)?);
    }
    Ok(())
}

fn check_shapes(model: &FusionModel, split: &DatasetSplit) -> Result<()> {
    if split.classes() != model.spec.classes {
        return Err(Error::invalid(format!(
            "dataset has {} classes, model expects {}",
            split.classes(),
            model.spec.classes
        )));
    }
    let spec = model.spec;
    for s in split.train.iter().chain(&split.val).chain(&split.test) {
        if s.chip_a.image_dims()? != (spec.height, spec.width, spec.p) || s.chip_b.image_dims()? != (spec.height, spec.width, spec.b) {
            return Err(Error::Dimension {
                op: "train",
                left: [s.chip_a.shape(), s.chip_b.shape()].concat(),
                right: vec![spec.height, spec.width, spec.p, spec.b],
            });
        }
    }
    Ok(())
}

/// Trains every network of `model`. Late variants train their two networks
/// independently, each on its own modality; the weighted variant then
/// derives its aggregation weights from validation recalls.
pub fn train_with_progress(
    model: &mut FusionModel,
    split: &DatasetSplit,
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&str, &EpochRecord),
) -> Result<Vec<TrainHistory>> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    check_shapes(model, split)?;
    let roles = FusionModel::roles(model.kind());
    let mut histories = Vec::with_capacity(roles.len());
    for (net, &role) in model.nets.iter_mut().zip(roles) {
        histories.push(train_network(net, role, split, config, on_epoch)?);
    }
    if config.epochs > 0 {
        refresh_late_weights(model, split)?;
    }
    Ok(histories)
}

pub fn train(model: &mut FusionModel, split: &DatasetSplit, config: &TrainConfig) -> Result<Vec<TrainHistory>> {
    train_with_progress(model, split, config, &mut |_, _| {})
}

/// The six variants after one shared training run.
#[derive(Debug, Clone)]
pub struct TrainedParadigms {
    /// One model per kind, in [`ParadigmKind::ALL`] order.
    pub models: Vec<FusionModel>,
    /// Histories of the four distinct networks: modality A, modality B, early, joint.
    pub histories: Vec<TrainHistory>,
}

impl TrainedParadigms {
    pub fn model(&self, kind: ParadigmKind) -> &FusionModel {
        &self.models[ParadigmKind::ALL.iter().position(|&k| k == kind).expect("listed kind")]
    }

    /// Histories of the networks that make up `kind`.
    pub fn histories_of(&self, kind: ParadigmKind) -> Vec<&TrainHistory> {
        FusionModel::roles(kind)
            .iter()
            .map(|r| self.histories.iter().find(|h| h.network == r.name()).expect("trained role"))
            .collect()
    }
}

/// Trains the four distinct networks once and assembles all six variants.
/// The late variants reuse the two single-modality networks, which is
/// equivalent to training them again because both start from the same seed
/// and see the same data. Up to `jobs` networks train concurrently; results
/// do not depend on `jobs`.
pub fn train_paradigms(
    spec: ModelSpec,
    backbone: &Backbone,
    split: &DatasetSplit,
    config: &TrainConfig,
    jobs: usize,
    on_epoch: &(dyn Fn(&str, &EpochRecord) + Sync),
) -> Result<TrainedParadigms> {
    config.validate()?;
    let bases = [ParadigmKind::SingleA, ParadigmKind::SingleB, ParadigmKind::Early, ParadigmKind::Joint];
    let mut models: Vec<FusionModel> = bases
        .iter()
        .map(|&k| build_model_with(Paradigm::from_kind(k, spec.classes), spec, backbone.clone(), config.seed))
        .collect::<Result<_>>()?;
    let mut histories: Vec<Option<Result<Vec<TrainHistory>>>> = (0..bases.len()).map(|_| None).collect();
    for (group, slots) in models.chunks_mut(jobs.max(1)).zip(histories.chunks_mut(jobs.max(1))) {
        std::thread::scope(|scope| {
            let handles: Vec<_> = group
                .iter_mut()
                .map(|m| scope.spawn(move || train_with_progress(m, split, config, &mut |n, r| on_epoch(n, r))))
                .collect();
            for (slot, h) in slots.iter_mut().zip(handles) {
                *slot = Some(h.join().expect("training thread panicked"));
            }
        });
    }
    let histories: Vec<TrainHistory> = histories
        .into_iter()
        .map(|h| h.expect("every job ran").map(|mut v| v.remove(0)))
        .collect::<Result<_>>()?;
    let late = |kind: ParadigmKind| FusionModel {
        paradigm: Paradigm::from_kind(kind, spec.classes),
        spec,
        backbone: backbone.clone(),
        nets: vec![models[0].nets[0].clone(), models[1].nets[0].clone()],
    };
    let late_mean = late(ParadigmKind::LateMean);
    let mut late_weighted = late(ParadigmKind::LateWeighted);
    if config.epochs > 0 {
        refresh_late_weights(&mut late_weighted, split)?;
    }
    models.push(late_mean);
    models.push(late_weighted);
    let by_kind = ParadigmKind::ALL
        .iter()
        .map(|k| models.iter().position(|m| m.kind() == *k).expect("assembled kind"))
        .collect::<Vec<_>>();
    let mut slots: Vec<Option<FusionModel>> = models.into_iter().map(Some).collect();
    let models = by_kind.into_iter().map(|i| slots[i].take().expect("unique kind")).collect();
    Ok(TrainedParadigms { models, histories })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_definition() {
        let mut p = vec![1.0f32];
        sgd_step(&mut [&mut p[..]], &[&[0.25]], 1.0, 1.0);
        assert_eq!(p, vec![0.75]);
        let mut q = vec![1.0f32, -2.0];
        sgd_step(&mut [&mut q[..]], &[&[0.0, 0.0]], 0.1, 1.0);
        assert_eq!(q, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = vec![0.3f32, -1.5];
        let mut st = AdamState::new([2]);
        adam_step(&mut [&mut p[..]], &[&[0.0, 0.0]], &mut st, 1e-3, (0.9, 0.999, 1e-8), 1.0);
        assert_eq!(p, vec![0.3, -1.5]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_is_unit_scaled() {
        // m̂ = g, v̂ = g², so the first step is lr·g/(|g|+ε) ≈ lr·sign(g)
        for g in [1e-3f32, 0.5, -20.0] {
            let mut p = vec![1.0f32];
            let mut st = AdamState::new([1]);
            adam_step(&mut [&mut p[..]], &[&[g]], &mut st, 0.01, (0.9, 0.999, 1e-8), 1.0);
            let want = 1.0 - 0.01 * (g as f64).signum() * (g.abs() as f64 / (g.abs() as f64 + 1e-8));
            assert!((p[0] as f64 - want).abs() < 1e-7, "g={g}: {} vs {want}", p[0]);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.learning_rate), (30, 16, 1e-3));
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            network: "early".into(),
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 1.5,
                train_accuracy: 0.25,
                val_loss: None,
                val_accuracy: None,
            }],
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n1,1.500000,0.250000,,\n");
    }
}
