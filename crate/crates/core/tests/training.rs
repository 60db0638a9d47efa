use fuselab::data::{class_names, split, synth_generate, DatasetSplit, SplitFractions, SynthConfig};
use fuselab::fusion::{build_model_with, Backbone, ModelSpec, Paradigm, ParadigmKind};
use fuselab::train::{train, train_paradigms, Optimizer, TrainConfig};

fn spec(size: usize) -> ModelSpec {
    ModelSpec {
        width: size,
        height: size,
        p: 2,
        b: 13,
        classes: 5,
    }
}

fn small_backbone() -> Backbone {
    Backbone {
        conv_channels: vec![4, 8],
        dense_units: 16,
        kernel: 3,
    }
}

fn dataset(per_class: usize, size: usize, seed: u64) -> DatasetSplit {
    let samples = synth_generate(&SynthConfig::new(per_class, size, 2, 13, 5, seed)).unwrap();
    split(samples, SplitFractions::default(), seed, true, class_names(5)).unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_is_a_no_op() {
    let data = dataset(4, 16, 1);
    for kind in ParadigmKind::ALL {
        let mut model = build_model_with(Paradigm::from_kind(kind, 5), spec(16), small_backbone(), 3).unwrap();
        let before = model.clone();
        let histories = train(&mut model, &data, &config(0)).unwrap();
        assert_eq!(model, before, "{kind}");
        assert!(histories.iter().all(|h| h.epochs.is_empty()));
    }
}

#[test]
fn memorises_ten_samples() {
    let samples = synth_generate(&SynthConfig::new(2, 16, 2, 13, 5, 9)).unwrap();
    let data = DatasetSplit {
        train: samples,
        class_names: class_names(5),
        ..Default::default()
    };
    let mut model = build_model_with(Paradigm::Early, spec(16), Backbone::default(), 9).unwrap();
    let h = train(&mut model, &data, &config(200)).unwrap();
    let last = h[0].epochs.last().unwrap();
    assert!(last.train_accuracy >= 0.99, "{last:?}");
}

#[test]
fn same_seed_gives_identical_parameters() {
    let data = dataset(6, 16, 2);
    let run = || {
        let mut m = build_model_with(Paradigm::Joint, spec(16), small_backbone(), 4).unwrap();
        let h = train(&mut m, &data, &config(3)).unwrap();
        (m, h)
    };
    let (a, ha) = run();
    let (b, hb) = run();
    assert_eq!(a, b);
    assert_eq!(ha, hb);
}

#[test]
fn loss_decreases_over_training() {
    let data = dataset(20, 16, 3);
    let mut model = build_model_with(Paradigm::SingleB, spec(16), small_backbone(), 3).unwrap();
    let h = train(&mut model, &data, &config(12)).unwrap();
    let losses: Vec<f64> = h[0].epochs.iter().map(|e| e.train_loss).collect();
    let head: f64 = losses[..5].iter().sum::<f64>() / 5.0;
    let tail: f64 = losses[losses.len() - 5..].iter().sum::<f64>() / 5.0;
    assert!(head > tail, "{losses:?}");
}

#[test]
fn late_members_only_see_their_own_modality() {
    let data = dataset(6, 16, 4);
    let trained = |d: &DatasetSplit| {
        let mut m = build_model_with(Paradigm::LateMean, spec(16), small_backbone(), 8).unwrap();
        train(&mut m, d, &config(2)).unwrap();
        m
    };
    let base = trained(&data);
    let mut scrambled_b = data.clone();
    for s in scrambled_b.train.iter_mut().chain(&mut scrambled_b.val) {
        s.chip_b.data_mut().iter_mut().for_each(|v| *v = 1.0 - *v);
    }
    let mut scrambled_a = data.clone();
    for s in scrambled_a.train.iter_mut().chain(&mut scrambled_a.val) {
        s.chip_a.data_mut().iter_mut().for_each(|v| *v *= 3.0);
    }
    let other_b = trained(&scrambled_b);
    let other_a = trained(&scrambled_a);
    assert_eq!(base.nets[0], other_b.nets[0], "modality-A network saw modality B");
    assert_ne!(base.nets[1], other_b.nets[1]);
    assert_eq!(base.nets[1], other_a.nets[1], "modality-B network saw modality A");
    assert_ne!(base.nets[0], other_a.nets[0]);
}

#[test]
fn weighted_late_fusion_ends_with_binary_complementary_weights() {
    let data = dataset(10, 16, 6);
    let mut m = build_model_with(Paradigm::from_kind(ParadigmKind::LateWeighted, 5), spec(16), small_backbone(), 2).unwrap();
    train(&mut m, &data, &config(2)).unwrap();
    let Paradigm::LateWeighted(w) = &m.paradigm else { panic!() };
    for (a, b) in w.alpha.iter().zip(&w.beta) {
        assert!((*a == 0.0 || *a == 1.0) && a + b == 1.0);
    }
}

#[test]
fn shared_training_is_independent_of_job_count() {
    let data = dataset(6, 16, 7);
    let run = |jobs| train_paradigms(spec(16), &small_backbone(), &data, &config(2), jobs, &|_, _| {}).unwrap();
    let one = run(1);
    let three = run(3);
    assert_eq!(one.models, three.models);
    assert_eq!(one.histories, three.histories);
    let late = one.model(ParadigmKind::LateMean);
    assert_eq!(late.nets[0], one.model(ParadigmKind::SingleA).nets[0]);
    assert_eq!(late.nets[1], one.model(ParadigmKind::SingleB).nets[0]);

    let mut alone = build_model_with(Paradigm::from_kind(ParadigmKind::LateWeighted, 5), spec(16), small_backbone(), 5).unwrap();
    train(&mut alone, &data, &config(2)).unwrap();
    assert_eq!(&alone, one.model(ParadigmKind::LateWeighted));
}

#[test]
fn divergence_is_reported_as_numeric_failure() {
    let data = dataset(4, 16, 8);
    let mut m = build_model_with(Paradigm::SingleB, spec(16), small_backbone(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 1e30,
        optimizer: Optimizer::Sgd,
        ..config(3)
    };
    let err = train(&mut m, &data, &cfg).unwrap_err();
    assert!(err.is_numeric(), "{err}");
}

#[test]
fn empty_training_split_is_rejected() {
    let data = DatasetSplit {
        class_names: class_names(5),
        ..Default::default()
    };
    let mut m = build_model_with(Paradigm::Early, spec(16), small_backbone(), 1).unwrap();
    assert!(train(&mut m, &data, &config(1)).is_err());
}
