//! Paired-chip samples, labels, splitting and augmentation.

pub mod chip;
pub mod manifest;
pub mod synth;

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use chip::{load_chip, save_chip};
pub use manifest::{load_dataset, write_dataset, ManifestRecord};
pub use synth::{synth_generate, BayesOracle, Separability, SeparabilityPlan, SynthConfig};

/// Land-cover classes in label order.
pub const CLASS_NAMES: [&str; 5] = ["city", "coastline", "lake", "river", "vegetation"];

/// Names for `classes` labels: the land-cover names when there are five.
pub fn class_names(classes: usize) -> Vec<String> {
    if classes == CLASS_NAMES.len() {
        CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..classes).map(|i| format!("class{i}")).collect()
    }
}

pub fn one_hot(class_index: usize, classes: usize) -> Result<Vec<f32>> {
    if class_index >= classes {
        return Err(Error::invalid(format!(
            "class index {class_index} out of range for {classes} classes"
        )));
    }
    let mut v = vec![0.0; classes];
    v[class_index] = 1.0;
    Ok(v)
}

/// One location observed by both sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub class_index: usize,
    pub chip_a: Tensor,
    pub chip_b: Tensor,
    pub label: Vec<f32>,
}

impl SamplePair {
    pub fn new(id: String, lat: f64, lon: f64, class_index: usize, classes: usize, chip_a: Tensor, chip_b: Tensor) -> Result<Self> {
        let (ha, wa, _) = chip_a.image_dims()?;
        let (hb, wb, _) = chip_b.image_dims()?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::Dimension {
                op: "sample pair",
                left: chip_a.shape().to_vec(),
                right: chip_b.shape().to_vec(),
            });
        }
        Ok(SamplePair {
            id,
            lat,
            lon,
            class_index,
            label: one_hot(class_index, classes)?,
            chip_a,
            chip_b,
        })
    }

    /// Both chips rotated by the same number of quarter turns.
    pub fn rotated(&self, quarters: usize) -> Result<Self> {
        Ok(SamplePair {
            id: if quarters % 4 == 0 {
                self.id.clone()
            } else {
                format!("{}@r{}", self.id, 90 * (quarters % 4))
            },
            chip_a: self.chip_a.rot90(quarters)?,
            chip_b: self.chip_b.rot90(quarters)?,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.85,
            val: 0.10,
            test: 0.05,
        }
    }
}

impl SplitFractions {
    fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!("{name} fraction {f} outside (0, 1)")));
            }
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("split fractions must sum to 1"));
        }
        Ok(())
    }

    /// `(val, test)` sizes for `n` items; the remainder goes to train.
    fn eval_sizes(&self, n: usize) -> (usize, usize) {
        let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
        (floor(self.val), floor(self.test))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::invalid(format!("unknown split '{s}' (valid: train, val, test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<SamplePair>,
    pub val: Vec<SamplePair>,
    pub test: Vec<SamplePair>,
    pub class_names: Vec<String>,
}

impl DatasetSplit {
    pub fn get(&self, which: SplitName) -> &[SamplePair] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// Verifies disjointness by id and that every label is one-hot.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("sample '{}' appears twice", s.id)));
            }
            if s.label != one_hot(s.class_index, self.classes())? {
                return Err(Error::invalid(format!("sample '{}' has a bad label", s.id)));
            }
        }
        Ok(())
    }
}

/// Seeded train/val/test partition; stratified splits apply the fractions per class.
pub fn split(samples: Vec<SamplePair>, fractions: SplitFractions, seed: u64, stratified: bool, class_names: Vec<String>) -> Result<DatasetSplit> {
    fractions.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("cannot split an empty sample list"));
    }
    if let Some(s) = samples.iter().find(|s| s.class_index >= class_names.len()) {
        return Err(Error::invalid(format!("sample '{}' has class {} of {}", s.id, s.class_index, class_names.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<SamplePair>> = if stratified {
        let mut by_class: BTreeMap<usize, Vec<SamplePair>> = BTreeMap::new();
        for s in samples {
            by_class.entry(s.class_index).or_default().push(s);
        }
        by_class.into_values().collect()
    } else {
        vec![samples]
    };
    let mut out = DatasetSplit {
        class_names,
        ..Default::default()
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let (n_val, n_test) = fractions.eval_sizes(group.len());
        let mut rest = group.into_iter();
        out.val.extend(rest.by_ref().take(n_val));
        out.test.extend(rest.by_ref().take(n_test));
        out.train.extend(rest);
    }
    Ok(out)
}

/// Each sample plus its 90°, 180° and 270° rotations. Evaluation splits are
/// augmented too unless `include_eval` is false.
pub fn augment(split: &DatasetSplit, include_eval: bool) -> Result<DatasetSplit> {
    let expand = |samples: &[SamplePair]| -> Result<Vec<SamplePair>> {
        let mut out = Vec::with_capacity(samples.len() * 4);
        for s in samples {
            let (h, w, _) = s.chip_a.image_dims()?;
            if h != w {
                return Err(Error::Shape(format!(
                    "augmentation needs square chips, '{}' is {h}x{w}",
                    s.id
                )));
            }
            for q in 0..4 {
                out.push(s.rotated(q)?);
            }
        }
        Ok(out)
    };
    Ok(DatasetSplit {
        train: expand(&split.train)?,
        val: if include_eval { expand(&split.val)? } else { split.val.clone() },
        test: if include_eval { expand(&split.test)? } else { split.test.clone() },
        class_names: split.class_names.clone(),
    })
}
