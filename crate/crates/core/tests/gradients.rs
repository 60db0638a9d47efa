use fuselab::fusion::{Backbone, FusionModel, ModelSpec, ParadigmKind};
use fuselab::nn::gradcheck::{analytic_gradients, compare_gradients};
use fuselab::nn::{gradient_check, Architecture, InputSpec, LayerKind, Network};
use fuselab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPSILON: f64 = 1e-3;
const TOLERANCE: f64 = 1e-4;

fn random_input(rng: &mut ChaCha8Rng, spec: InputSpec) -> Tensor<f64> {
    let n = spec.height * spec.width * spec.channels;
    Tensor::new(spec.shape().to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn truth(classes: usize, c: usize) -> Vec<f64> {
    (0..classes).map(|i| if i == c { 1.0 } else { 0.0 }).collect()
}

fn setup(arch: &Architecture, seed: u64) -> (Network<f64>, Vec<Tensor<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net: Network<f64> = Network::init(arch, &mut rng).unwrap();
    let inputs = arch.inputs.iter().map(|&s| random_input(&mut rng, s)).collect();
    let classes = net.outputs();
    (net, inputs, truth(classes, seed as usize % classes))
}

fn assert_gradients_match(arch: &Architecture, seed: u64) {
    assert_gradients_match_with(arch, seed, EPSILON);
}

fn assert_gradients_match_with(arch: &Architecture, seed: u64, epsilon: f64) {
    let (net, inputs, t) = setup(arch, seed);
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let report = gradient_check(&net, &refs, &t, epsilon, TOLERANCE).unwrap();
    assert!(report.passed, "{arch:?}\n{report:#?}");
}

fn conv(cin: usize, cout: usize) -> LayerKind {
    LayerKind::Conv {
        kernel: 3,
        in_channels: cin,
        out_channels: cout,
    }
}

fn dense(inputs: usize, outputs: usize) -> LayerKind {
    LayerKind::Dense { inputs, outputs }
}

fn single(input: InputSpec, branch: Vec<LayerKind>, head: Vec<LayerKind>) -> Architecture {
    Architecture {
        inputs: vec![input],
        branches: vec![branch],
        head,
    }
}

#[test]
fn conv_layer() {
    let arch = single(
        InputSpec::new(5, 5, 2),
        vec![conv(2, 3), LayerKind::Flatten],
        vec![dense(75, 4), LayerKind::Softmax],
    );
    assert_gradients_match(&arch, 1);
}

#[test]
fn dense_and_softmax_layers() {
    let arch = single(
        InputSpec::new(2, 3, 2),
        vec![LayerKind::Flatten],
        vec![dense(12, 7), dense(7, 5), LayerKind::Softmax],
    );
    assert_gradients_match(&arch, 2);
}

#[test]
fn relu_layer() {
    let arch = single(
        InputSpec::new(4, 4, 2),
        vec![conv(2, 3), LayerKind::Relu, LayerKind::Flatten],
        vec![dense(48, 6), LayerKind::Relu, dense(6, 3), LayerKind::Softmax],
    );
    assert_gradients_match(&arch, 3);
}

#[test]
fn maxpool_layer_even_and_odd_extents() {
    for (h, w, seed) in [(6, 6, 4), (5, 7, 5)] {
        let arch = single(
            InputSpec::new(h, w, 2),
            vec![conv(2, 2), LayerKind::MaxPool2, LayerKind::Flatten],
            vec![dense(h.div_ceil(2) * w.div_ceil(2) * 2, 4), LayerKind::Softmax],
        );
        assert_gradients_match(&arch, seed);
    }
}

#[test]
fn flatten_between_branches() {
    let arch = Architecture {
        inputs: vec![InputSpec::new(3, 3, 1), InputSpec::new(3, 3, 2)],
        branches: vec![vec![conv(1, 2), LayerKind::Flatten], vec![conv(2, 1), LayerKind::Flatten]],
        head: vec![dense(27, 3), LayerKind::Softmax],
    };
    assert_gradients_match(&arch, 6);
}

fn reduced() -> (ModelSpec, Backbone) {
    (
        ModelSpec {
            width: 8,
            height: 8,
            p: 2,
            b: 3,
            classes: 5,
        },
        Backbone {
            conv_channels: vec![2, 3, 2],
            dense_units: 6,
            kernel: 3,
        },
    )
}

#[test]
fn every_paradigm_architecture() {
    let (spec, backbone) = reduced();
    for (i, kind) in ParadigmKind::ALL.into_iter().enumerate() {
        for &role in FusionModel::roles(kind) {
            let arch = FusionModel::architecture(&spec, &backbone, role);
            assert_gradients_match(&arch, 500 + i as u64);
        }
    }
}

/// A step of 1e-3 often straddles a ReLU or max-pool switch on these small
/// stacks, so the fixed draws above avoid one. A narrow step checks many
/// arbitrary draws.
#[test]
fn every_paradigm_architecture_many_draws() {
    let (spec, backbone) = reduced();
    for seed in 0..10 {
        for kind in ParadigmKind::ALL {
            for &role in FusionModel::roles(kind) {
                let arch = FusionModel::architecture(&spec, &backbone, role);
                assert_gradients_match_with(&arch, seed, 1e-6);
            }
        }
    }
}

#[test]
fn sign_flipped_gradient_is_caught() {
    let (spec, backbone) = reduced();
    let arch = FusionModel::architecture(&spec, &backbone, fuselab::fusion::NetRole::Joint);
    let (net, inputs, t) = setup(&arch, 20);
    let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
    let mut grads = analytic_gradients(&net, &refs, &t).unwrap();
    let good = compare_gradients(&net, &refs, &t, &grads, EPSILON, TOLERANCE).unwrap();
    assert!(good.passed);
    let last = grads.layers.len() - 1;
    grads.layers[last].bias.iter_mut().for_each(|g| *g = -*g);
    let bad = compare_gradients(&net, &refs, &t, &grads, EPSILON, TOLERANCE).unwrap();
    assert!(!bad.passed);
    assert!(bad.layers.last().unwrap().max_rel_error > 1.0);
}
