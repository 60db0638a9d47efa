//! Class-conditional synthetic chip pairs with a known generative model.
//!
//! Every class has a per-channel mean in each modality. Modality-A pixels are
//! the mean times unit-mean Gamma speckle; modality-B pixels are the mean plus
//! Gaussian noise. A class that is separable in only one modality copies
//! another class's signature in the other one, so a single-modality model
//! cannot tell the two apart.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{class_names, SamplePair};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Equivalent number of looks of the modality-A speckle.
pub const SPECKLE_LOOKS: f64 = 4.0;
/// Standard deviation of the modality-B additive noise.
pub const NOISE_B_SIGMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "visible", rename_all = "kebab-case")]
pub enum Separability {
    Both,
    /// Distinct in modality A; in modality B it looks exactly like `mimics`.
    AOnly { mimics: usize },
    /// Distinct in modality B; in modality A it looks exactly like `mimics`.
    BOnly { mimics: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparabilityPlan(pub Vec<Separability>);

impl SeparabilityPlan {
    /// Lake (2) hidden from modality B behind coastline, vegetation (4) hidden
    /// from modality A behind city; the rest visible to both. Smaller or larger
    /// class counts keep whichever of those two entries fit.
    pub fn default_for(classes: usize) -> Self {
        let mut plan = vec![Separability::Both; classes];
        if classes >= 4 {
            plan[2] = Separability::AOnly { mimics: 1 };
        }
        if classes >= 2 {
            plan[classes - 1] = Separability::BOnly { mimics: 0 };
        }
        SeparabilityPlan(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.0.len();
        for (c, s) in self.0.iter().enumerate() {
            match *s {
                Separability::Both => {}
                Separability::AOnly { mimics } | Separability::BOnly { mimics } => {
                    if mimics >= n || mimics == c {
                        return Err(Error::invalid(format!("class {c} cannot mimic class {mimics}")));
                    }
                    let same_kind = std::mem::discriminant(&self.0[mimics]) == std::mem::discriminant(s);
                    if same_kind {
                        return Err(Error::invalid(format!(
                            "class {c} mimics class {mimics}, which is hidden in the same modality"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub p: usize,
    pub b: usize,
    pub classes: usize,
    pub seed: u64,
    pub plan: SeparabilityPlan,
}

impl SynthConfig {
    pub fn new(per_class: usize, size: usize, p: usize, b: usize, classes: usize, seed: u64) -> Self {
        SynthConfig {
            per_class,
            width: size,
            height: size,
            p,
            b,
            classes,
            seed,
            plan: SeparabilityPlan::default_for(classes),
        }
    }

    fn validate(&self) -> Result<()> {
        if [self.per_class, self.width, self.height, self.p, self.b, self.classes].contains(&0) {
            return Err(Error::invalid("synthetic dataset dimensions must be positive"));
        }
        if self.plan.0.len() != self.classes {
            return Err(Error::invalid(format!(
                "separability plan covers {} classes, expected {}",
                self.plan.0.len(),
                self.classes
            )));
        }
        self.plan.validate()
    }
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Per-class channel means of both modalities after the plan is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Signatures {
    pub mean_a: Vec<Vec<f64>>,
    pub mean_b: Vec<Vec<f64>>,
}

impl Signatures {
    pub fn new(classes: usize, p: usize, b: usize, plan: &SeparabilityPlan) -> Self {
        let hue = |c: usize| frac(0.5 + 0.618_034 * c as f64);
        let mut mean_a: Vec<Vec<f64>> = (0..classes)
            .map(|c| (0..p).map(|ch| 0.15 + 0.7 * frac(hue(c) + 0.29 * ch as f64)).collect())
            .collect();
        let mut mean_b: Vec<Vec<f64>> = (0..classes)
            .map(|c| {
                (0..b)
                    .map(|band| 0.1 + 0.8 * frac(hue(c) * (1.0 + 0.37 * band as f64) + 0.13 * band as f64))
                    .collect()
            })
            .collect();
        for (c, s) in plan.0.iter().enumerate() {
            match *s {
                Separability::Both => {}
                Separability::AOnly { mimics } => mean_b[c] = mean_b[mimics].clone(),
                Separability::BOnly { mimics } => mean_a[c] = mean_a[mimics].clone(),
            }
        }
        Signatures { mean_a, mean_b }
    }
}

/// Generates `per_class` pairs for each class, class by class, from one seeded stream.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<SamplePair>> {
    config.validate()?;
    let sig = Signatures::new(config.classes, config.p, config.b, &config.plan);
    let names = class_names(config.classes);
    let speckle = Gamma::new(SPECKLE_LOOKS, 1.0 / SPECKLE_LOOKS).expect("valid gamma");
    let noise = Normal::new(0.0, NOISE_B_SIGMA).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pixels = config.width * config.height;
    let mut out = Vec::with_capacity(config.per_class * config.classes);
    for c in 0..config.classes {
        for i in 0..config.per_class {
            let lat = 36.0 + 11.0 * rng.gen::<f64>();
            let lon = 7.0 + 11.0 * rng.gen::<f64>();
            let mut a = Vec::with_capacity(pixels * config.p);
            for _ in 0..pixels {
                for &mu in &sig.mean_a[c] {
                    a.push((mu * speckle.sample(&mut rng)) as f32);
                }
            }
            let mut b = Vec::with_capacity(pixels * config.b);
            for _ in 0..pixels {
                for &mu in &sig.mean_b[c] {
                    b.push((mu + noise.sample(&mut rng)) as f32);
                }
            }
            out.push(SamplePair::new(
                format!("{}-{i:04}", names[c]),
                lat,
                lon,
                c,
                config.classes,
                Tensor::new(vec![config.height, config.width, config.p], a)?,
                Tensor::new(vec![config.height, config.width, config.b], b)?,
            )?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modalities {
    A,
    B,
    Both,
}

/// Maximum-likelihood classifier on the true generative model (uniform class prior).
#[derive(Debug, Clone)]
pub struct BayesOracle {
    sig: Signatures,
}

impl BayesOracle {
    pub fn new(config: &SynthConfig) -> Self {
        BayesOracle {
            sig: Signatures::new(config.classes, config.p, config.b, &config.plan),
        }
    }

    /// Class log-likelihoods up to a class-independent constant.
    pub fn log_likelihoods(&self, sample: &SamplePair, use_: Modalities) -> Vec<f64> {
        let classes = self.sig.mean_a.len();
        (0..classes)
            .map(|c| {
                let mut ll = 0.0;
                if use_ != Modalities::B {
                    let mu = &self.sig.mean_a[c];
                    for px in sample.chip_a.data().chunks_exact(mu.len()) {
                        for (&x, &m) in px.iter().zip(mu) {
                            // Gamma(L, m/L): −L·ln m − L·x/m
                            ll -= SPECKLE_LOOKS * (m.ln() + x as f64 / m);
                        }
                    }
                }
                if use_ != Modalities::A {
                    let mu = &self.sig.mean_b[c];
                    let inv = 1.0 / (2.0 * NOISE_B_SIGMA * NOISE_B_SIGMA);
                    for px in sample.chip_b.data().chunks_exact(mu.len()) {
                        for (&x, &m) in px.iter().zip(mu) {
                            ll -= (x as f64 - m).powi(2) * inv;
                        }
                    }
                }
                ll
            })
            .collect()
    }

    /// Most likely class; exact ties go to the lowest index.
    pub fn classify(&self, sample: &SamplePair, use_: Modalities) -> usize {
        let ll = self.log_likelihoods(sample, use_);
        let mut best = 0;
        for (c, &v) in ll.iter().enumerate() {
            if v > ll[best] {
                best = c;
            }
        }
        best
    }
}
