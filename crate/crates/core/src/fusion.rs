//! The six model variants and the decision-level aggregation rules.
//!
//! Modality A is the two-channel SAR-like input, modality B the multispectral
//! one. Late variants hold one independently trained network per modality.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SamplePair;
use crate::error::{Error, Result};
use crate::nn::{Architecture, InputSpec, LayerKind, Network};
use crate::tensor::Tensor;

/// Paradigm without its aggregation weights; what the CLI and reports name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParadigmKind {
    SingleA,
    SingleB,
    Early,
    Joint,
    LateMean,
    LateWeighted,
}

impl ParadigmKind {
    pub const ALL: [ParadigmKind; 6] = [
        ParadigmKind::SingleA,
        ParadigmKind::SingleB,
        ParadigmKind::Early,
        ParadigmKind::Joint,
        ParadigmKind::LateMean,
        ParadigmKind::LateWeighted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParadigmKind::SingleA => "single-a",
            ParadigmKind::SingleB => "single-b",
            ParadigmKind::Early => "early",
            ParadigmKind::Joint => "joint",
            ParadigmKind::LateMean => "late-mean",
            ParadigmKind::LateWeighted => "late-weighted",
        }
    }

    pub fn is_fusion(self) -> bool {
        !matches!(self, ParadigmKind::SingleA | ParadigmKind::SingleB)
    }

    pub fn is_late(self) -> bool {
        matches!(self, ParadigmKind::LateMean | ParadigmKind::LateWeighted)
    }
}

impl fmt::Display for ParadigmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParadigmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParadigmKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<_> = ParadigmKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!(
                    "unknown paradigm '{s}' (valid: {})",
                    valid.join(", ")
                ))
            })
    }
}

/// Per-class binary weights for the weighted late aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateWeights {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LateWeights {
    /// Validates that both vectors are binary, equally long and complementary.
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        check_complementary(&alpha, &beta)?;
        if alpha.iter().chain(&beta).any(|&w| w != 0.0 && w != 1.0) {
            return Err(Error::invalid(format!(
                "late weights must be 0 or 1: alpha={alpha:?} beta={beta:?}"
            )));
        }
        Ok(LateWeights { alpha, beta })
    }

    /// All classes taken from modality B.
    pub fn favour_b(classes: usize) -> Self {
        LateWeights {
            alpha: vec![0.0; classes],
            beta: vec![1.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }
}

fn check_complementary(alpha: &[f64], beta: &[f64]) -> Result<()> {
    if alpha.len() != beta.len() {
        return Err(Error::Dimension {
            op: "late weights",
            left: vec![alpha.len()],
            right: vec![beta.len()],
        });
    }
    if let Some(c) = alpha.iter().zip(beta).position(|(a, b)| a + b != 1.0) {
        return Err(Error::invalid(format!(
            "alpha[{c}] + beta[{c}] = {} (must be 1)",
            alpha[c] + beta[c]
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "paradigm", rename_all = "kebab-case")]
pub enum Paradigm {
    SingleA,
    SingleB,
    Early,
    Joint,
    LateMean,
    LateWeighted(LateWeights),
}

impl Paradigm {
    pub fn kind(&self) -> ParadigmKind {
        match self {
            Paradigm::SingleA => ParadigmKind::SingleA,
            Paradigm::SingleB => ParadigmKind::SingleB,
            Paradigm::Early => ParadigmKind::Early,
            Paradigm::Joint => ParadigmKind::Joint,
            Paradigm::LateMean => ParadigmKind::LateMean,
            Paradigm::LateWeighted(_) => ParadigmKind::LateWeighted,
        }
    }

    /// Default paradigm of a kind; weighted late fusion starts from all-B weights.
    pub fn from_kind(kind: ParadigmKind, classes: usize) -> Self {
        match kind {
            ParadigmKind::SingleA => Paradigm::SingleA,
            ParadigmKind::SingleB => Paradigm::SingleB,
            ParadigmKind::Early => Paradigm::Early,
            ParadigmKind::Joint => Paradigm::Joint,
            ParadigmKind::LateMean => Paradigm::LateMean,
            ParadigmKind::LateWeighted => Paradigm::LateWeighted(LateWeights::favour_b(classes)),
        }
    }
}

/// Chip and label geometry shared by every network of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub width: usize,
    pub height: usize,
    /// Modality-A channels.
    pub p: usize,
    /// Modality-B channels.
    pub b: usize,
    pub classes: usize,
}

impl ModelSpec {
    pub fn input_a(&self) -> InputSpec {
        InputSpec::new(self.height, self.width, self.p)
    }

    pub fn input_b(&self) -> InputSpec {
        InputSpec::new(self.height, self.width, self.b)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.width, self.height, self.p, self.b, self.classes].contains(&0) {
            return Err(Error::invalid(format!("all model dimensions must be positive: {self:?}")));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::Shape(format!(
                "chips of {}x{} are too small for three pooling stages (min 8x8)",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Widths of the basic CNN: conv blocks (3x3 conv, ReLU, 2x2 max-pool) then
/// Flatten, Dense, ReLU, Dense(C), Softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backbone {
    pub conv_channels: Vec<usize>,
    pub dense_units: usize,
    pub kernel: usize,
}

impl Default for Backbone {
    fn default() -> Self {
        Backbone {
            conv_channels: vec![16, 32, 64],
            dense_units: 128,
            kernel: 3,
        }
    }
}

impl Backbone {
    fn features(&self, input: InputSpec) -> Vec<LayerKind> {
        let mut layers = Vec::new();
        let mut cin = input.channels;
        for &cout in &self.conv_channels {
            layers.push(LayerKind::Conv {
                kernel: self.kernel,
                in_channels: cin,
                out_channels: cout,
            });
            layers.push(LayerKind::Relu);
            layers.push(LayerKind::MaxPool2);
            cin = cout;
        }
        layers.push(LayerKind::Flatten);
        layers
    }

    fn feature_len(&self, input: InputSpec) -> usize {
        let (mut h, mut w) = (input.height, input.width);
        for _ in &self.conv_channels {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        h * w * self.conv_channels.last().copied().unwrap_or(input.channels)
    }

    fn head(&self, features: usize, classes: usize) -> Vec<LayerKind> {
        vec![
            LayerKind::Dense {
                inputs: features,
                outputs: self.dense_units,
            },
            LayerKind::Relu,
            LayerKind::Dense {
                inputs: self.dense_units,
                outputs: classes,
            },
            LayerKind::Softmax,
        ]
    }

    /// One branch over one input.
    pub fn single(&self, input: InputSpec, classes: usize) -> Architecture {
        Architecture {
            inputs: vec![input],
            branches: vec![self.features(input)],
            head: self.head(self.feature_len(input), classes),
        }
    }

    /// One convolutional branch per input, features concatenated before a shared head.
    pub fn joint(&self, a: InputSpec, b: InputSpec, classes: usize) -> Architecture {
        Architecture {
            inputs: vec![a, b],
            branches: vec![self.features(a), self.features(b)],
            head: self.head(self.feature_len(a) + self.feature_len(b), classes),
        }
    }
}

/// Which network of a model a seed is drawn for. Single-modality networks
/// share their role with the matching late-fusion member, so a late model
/// built from the same seed starts from the same two networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    ModalityA,
    ModalityB,
    Early,
    Joint,
}

impl NetRole {
    pub fn name(self) -> &'static str {
        match self {
            NetRole::ModalityA => "modality-a",
            NetRole::ModalityB => "modality-b",
            NetRole::Early => "early",
            NetRole::Joint => "joint",
        }
    }

    pub fn seed(self, run_seed: u64) -> u64 {
        let tag: u64 = match self {
            NetRole::ModalityA => 0x41,
            NetRole::ModalityB => 0x42,
            NetRole::Early => 0x45,
            NetRole::Joint => 0x4a,
        };
        splitmix64(run_seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub paradigm: Paradigm,
    pub spec: ModelSpec,
    pub backbone: Backbone,
    /// One network, or `[A, B]` for late variants.
    pub nets: Vec<Network>,
}

impl FusionModel {
    pub fn kind(&self) -> ParadigmKind {
        self.paradigm.kind()
    }

    pub fn roles(kind: ParadigmKind) -> &'static [NetRole] {
        match kind {
            ParadigmKind::SingleA => &[NetRole::ModalityA],
            ParadigmKind::SingleB => &[NetRole::ModalityB],
            ParadigmKind::Early => &[NetRole::Early],
            ParadigmKind::Joint => &[NetRole::Joint],
            ParadigmKind::LateMean | ParadigmKind::LateWeighted => &[NetRole::ModalityA, NetRole::ModalityB],
        }
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(|n| n.param_count()).sum()
    }

    /// Architecture each role expects for this model's geometry.
    pub fn architecture(spec: &ModelSpec, backbone: &Backbone, role: NetRole) -> Architecture {
        match role {
            NetRole::ModalityA => backbone.single(spec.input_a(), spec.classes),
            NetRole::ModalityB => backbone.single(spec.input_b(), spec.classes),
            NetRole::Early => backbone.single(
                InputSpec::new(spec.height, spec.width, spec.p + spec.b),
                spec.classes,
            ),
            NetRole::Joint => backbone.joint(spec.input_a(), spec.input_b(), spec.classes),
        }
    }

    /// Checks that the networks match the paradigm and geometry.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let roles = Self::roles(self.kind());
        if roles.len() != self.nets.len() {
            return Err(Error::invalid(format!(
                "{} needs {} network(s), found {}",
                self.kind(),
                roles.len(),
                self.nets.len()
            )));
        }
        for (net, &role) in self.nets.iter().zip(roles) {
            if net.architecture() != Self::architecture(&self.spec, &self.backbone, role) {
                return Err(Error::Shape(format!(
                    "{} network for {role:?} does not match a {}x{}x({}, {}) model with {} classes",
                    self.kind(),
                    self.spec.height,
                    self.spec.width,
                    self.spec.p,
                    self.spec.b,
                    self.spec.classes
                )));
            }
        }
        if let Paradigm::LateWeighted(w) = &self.paradigm {
            if w.classes() != self.spec.classes {
                return Err(Error::invalid("late weights do not cover every class"));
            }
        }
        Ok(())
    }
}

pub fn build_model(paradigm: Paradigm, spec: ModelSpec, seed: u64) -> Result<FusionModel> {
    build_model_with(paradigm, spec, Backbone::default(), seed)
}

pub fn build_model_with(paradigm: Paradigm, spec: ModelSpec, backbone: Backbone, seed: u64) -> Result<FusionModel> {
    spec.validate()?;
    if let Paradigm::LateWeighted(w) = &paradigm {
        if w.classes() != spec.classes {
            return Err(Error::invalid(format!(
                "late weights cover {} classes, model has {}",
                w.classes(),
                spec.classes
            )));
        }
    }
    let nets = FusionModel::roles(paradigm.kind())
        .iter()
        .map(|&role| {
            let arch = FusionModel::architecture(&spec, &backbone, role);
            Network::init(&arch, &mut ChaCha8Rng::seed_from_u64(role.seed(seed)))
        })
        .collect::<Result<_>>()?;
    Ok(FusionModel {
        paradigm,
        spec,
        backbone,
        nets,
    })
}

/// Element-wise mean of two prediction vectors.
pub fn late_aggregate_mean(pred_a: &[f32], pred_b: &[f32]) -> Result<Vec<f32>> {
    if pred_a.len() != pred_b.len() {
        return Err(Error::Dimension {
            op: "late_aggregate_mean",
            left: vec![pred_a.len()],
            right: vec![pred_b.len()],
        });
    }
    Ok(pred_a
        .iter()
        .zip(pred_b)
        .map(|(&a, &b)| ((a as f64 + b as f64) / 2.0) as f32)
        .collect())
}

/// `output[c] = alpha[c]·pred_a[c] + beta[c]·pred_b[c]`, not renormalised.
pub fn late_aggregate_weighted(pred_a: &[f32], pred_b: &[f32], alpha: &[f64], beta: &[f64]) -> Result<Vec<f32>> {
    check_complementary(alpha, beta)?;
    if pred_a.len() != pred_b.len() || pred_a.len() != alpha.len() {
        return Err(Error::Dimension {
            op: "late_aggregate_weighted",
            left: vec![pred_a.len(), pred_b.len()],
            right: vec![alpha.len()],
        });
    }
    Ok(pred_a
        .iter()
        .zip(pred_b)
        .zip(alpha.iter().zip(beta))
        .map(|((&a, &b), (&wa, &wb))| (wa * a as f64 + wb * b as f64) as f32)
        .collect())
}

/// Takes each class from the modality whose network recalls it better; ties go to B.
pub fn derive_weights(recall_a: &[f64], recall_b: &[f64]) -> Result<LateWeights> {
    if recall_a.len() != recall_b.len() {
        return Err(Error::Dimension {
            op: "derive_weights",
            left: vec![recall_a.len()],
            right: vec![recall_b.len()],
        });
    }
    let alpha: Vec<f64> = recall_a
        .iter()
        .zip(recall_b)
        .map(|(a, b)| if a > b { 1.0 } else { 0.0 })
        .collect();
    let beta = alpha.iter().map(|a| 1.0 - a).collect();
    LateWeights::new(alpha, beta)
}

/// Decision vector for a pair of chips, routed according to the paradigm.
pub fn predict_chips(model: &FusionModel, chip_a: &Tensor, chip_b: &Tensor) -> Result<Vec<f32>> {
    let spec = &model.spec;
    for (chip, channels) in [(chip_a, spec.p), (chip_b, spec.b)] {
        if chip.image_dims()? != (spec.height, spec.width, channels) {
            return Err(Error::Dimension {
                op: "predict",
                left: chip.shape().to_vec(),
                right: vec![spec.height, spec.width, channels],
            });
        }
    }
    match &model.paradigm {
        Paradigm::SingleA => model.nets[0].predict(&[chip_a]),
        Paradigm::SingleB => model.nets[0].predict(&[chip_b]),
        Paradigm::Early => model.nets[0].predict(&[&chip_a.concat_channels(chip_b)?]),
        Paradigm::Joint => model.nets[0].predict(&[chip_a, chip_b]),
        Paradigm::LateMean => {
            late_aggregate_mean(&model.nets[0].predict(&[chip_a])?, &model.nets[1].predict(&[chip_b])?)
        }
        Paradigm::LateWeighted(w) => late_aggregate_weighted(
            &model.nets[0].predict(&[chip_a])?,
            &model.nets[1].predict(&[chip_b])?,
            &w.alpha,
            &w.beta,
        ),
    }
}

pub fn predict(model: &FusionModel, sample: &SamplePair) -> Result<Vec<f32>> {
    predict_chips(model, &sample.chip_a, &sample.chip_b)
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: usize, b: usize) -> ModelSpec {
        ModelSpec {
            width: 64,
            height: 64,
            p,
            b,
            classes: 5,
        }
    }

    #[test]
    fn paradigm_names_round_trip() {
        for k in ParadigmKind::ALL {
            assert_eq!(k.name().parse::<ParadigmKind>().unwrap(), k);
        }
        let err = "fusion".parse::<ParadigmKind>().unwrap_err().to_string();
        assert!(err.contains("late-weighted") && err.contains("single-a"), "{err}");
    }

    #[test]
    fn early_first_conv_sees_all_channels() {
        let m = build_model(Paradigm::Early, spec(2, 13), 1).unwrap();
        let first = m.nets[0].layers().next().unwrap().kind();
        assert_eq!(
            first,
            LayerKind::Conv {
                kernel: 3,
                in_channels: 15,
                out_channels: 16
            }
        );
    }

    #[test]
    fn joint_outputs_five_classes() {
        let m = build_model(Paradigm::Joint, spec(2, 13), 1).unwrap();
        let dense_out = m.nets[0]
            .layers()
            .filter_map(|l| match l.kind() {
                LayerKind::Dense { outputs, .. } => Some(outputs),
                _ => None,
            })
            .last();
        assert_eq!(dense_out, Some(5));
        assert_eq!(m.nets[0].inputs().len(), 2);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(Paradigm::LateMean, spec(2, 3), 11).unwrap();
        let b = build_model(Paradigm::LateMean, spec(2, 3), 11).unwrap();
        assert_eq!(a, b);
        let c = build_model(Paradigm::LateMean, spec(2, 3), 12).unwrap();
        assert_ne!(a, c);
        let single = build_model(Paradigm::SingleA, spec(2, 3), 11).unwrap();
        assert_eq!(single.nets[0], a.nets[0]);
    }

    #[test]
    fn parameter_count_ordering() {
        let s = spec(2, 13);
        let count = |p| build_model(p, s, 0).unwrap().param_count();
        let early = count(Paradigm::Early);
        assert!(early > count(Paradigm::SingleA));
        assert!(early > count(Paradigm::SingleB));
        assert!(count(Paradigm::Joint) < count(Paradigm::LateMean));
    }

    #[test]
    fn small_chips_are_rejected() {
        let mut s = spec(2, 3);
        s.width = 7;
        assert!(matches!(build_model(Paradigm::Early, s, 0), Err(Error::Shape(_))));
        s.width = 8;
        s.classes = 0;
        assert!(build_model(Paradigm::Early, s, 0).is_err());
    }

    #[test]
    fn mean_aggregation() {
        let p = [0.1f32, 0.2, 0.3, 0.4];
        assert_eq!(late_aggregate_mean(&p, &p).unwrap(), p.to_vec());
        let out = late_aggregate_mean(&[1.0, 0.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![0.5, 0.5, 0.0, 0.0, 0.0]);
        assert!(late_aggregate_mean(&p, &p[..3]).is_err());
    }

    #[test]
    fn weighted_aggregation() {
        let a = [0.1f32, 0.6, 0.1, 0.1, 0.1];
        let b = [0.7f32, 0.1, 0.05, 0.05, 0.1];
        let ones = [1.0; 5];
        let zeros = [0.0; 5];
        assert_eq!(late_aggregate_weighted(&a, &b, &ones, &zeros).unwrap(), a.to_vec());
        let out = late_aggregate_weighted(&a, &b, &[0.0, 1.0, 1.0, 1.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.7, 0.6, 0.1, 0.1, 0.1]);
        assert_eq!(argmax(&out), 0);
        assert!(late_aggregate_weighted(&a, &b, &ones, &ones).is_err());
    }

    #[test]
    fn weights_from_recalls() {
        let s1 = [0.88, 0.90, 0.71, 0.92, 0.54];
        let s2 = [0.90, 0.85, 0.64, 0.66, 0.85];
        let w = derive_weights(&s1, &s2).unwrap();
        assert_eq!(w.alpha, vec![0.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(w.beta, vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        let tie = derive_weights(&[0.5; 5], &[0.5; 5]).unwrap();
        assert_eq!(tie, LateWeights::favour_b(5));
        assert_eq!(derive_weights(&[1.0; 5], &[0.0; 5]).unwrap().alpha, vec![1.0; 5]);
    }

    #[test]
    fn late_weights_reject_non_binary() {
        assert!(LateWeights::new(vec![0.5], vec![0.5]).is_err());
        assert!(LateWeights::new(vec![1.0, 0.0], vec![0.0]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }
}
