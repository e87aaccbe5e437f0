//! Finite-difference and structural checks for the network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{bilstm_forward, LstmDims};
use super::tests::names;
use super::*;

const EPS: f64 = 1e-4;
const FLOOR: f64 = 1e-8;

fn randomize(net: &mut Network, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in net.params.iter_mut().flatten().flatten() {
        *v = rng.random_range(-scale..scale);
    }
}

fn random_batch(shape: &[usize], n: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per: usize = shape.iter().product();
    let samples: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..per).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    Tensor::stack(&samples, shape).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

/// Largest relative error between analytic and central-difference
/// gradients over the chosen flat parameter indices.
fn max_param_error(net: &mut Network, batch: &Tensor, labels: &[usize], mode: Mode, idx: &[usize]) -> f64 {
    let pass = net.forward(batch, mode).unwrap();
    let grads = net.backward(&pass, labels).unwrap();
    let analytic: Vec<f64> = grads.params.iter().flatten().flatten().copied().collect();
    let mut worst: f64 = 0.0;
    for &n in idx {
        let orig = *net.param_mut(n);
        *net.param_mut(n) = orig + EPS;
        let up = Network::loss(&net.forward(batch, mode).unwrap(), labels);
        *net.param_mut(n) = orig - EPS;
        let down = Network::loss(&net.forward(batch, mode).unwrap(), labels);
        *net.param_mut(n) = orig;
        let numeric = (up - down) / (2.0 * EPS);
        worst = worst.max(rel_err(analytic[n], numeric));
    }
    worst
}

fn max_input_error(net: &Network, batch: &Tensor, labels: &[usize], mode: Mode) -> f64 {
    let pass = net.forward(batch, mode).unwrap();
    let analytic = net.backward(&pass, labels).unwrap().input.unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = batch.clone();
    for n in 0..batch.data().len() {
        let orig = batch.data()[n];
        probe.data_mut()[n] = orig + EPS;
        let up = Network::loss(&net.forward(&probe, mode).unwrap(), labels);
        probe.data_mut()[n] = orig - EPS;
        let down = Network::loss(&net.forward(&probe, mode).unwrap(), labels);
        probe.data_mut()[n] = orig;
        worst = worst.max(rel_err(analytic.data()[n], (up - down) / (2.0 * EPS)));
    }
    worst
}

fn check_all(input: Vec<usize>, specs: Vec<LayerSpec>, classes: usize, mode: Mode, seed: u64) {
    let mut net = Network::new(input.clone(), specs, names(classes), seed).unwrap();
    randomize(&mut net, seed, 0.5);
    let batch = random_batch(&input, 2, seed + 1);
    let labels = [0, classes - 1];
    let all: Vec<usize> = (0..net.param_count()).collect();
    let err = max_param_error(&mut net, &batch, &labels, mode, &all);
    assert!(err < 1e-4, "parameter gradient error {err}");
    if !net.specs().iter().any(|s| matches!(s, LayerSpec::Resize { .. })) {
        let err = max_input_error(&net, &batch, &labels, mode);
        assert!(err < 1e-4, "input gradient error {err}");
    }
}

const TRAIN: Mode = Mode::Train { dropout_seed: 17 };

#[test]
fn gradcheck_conv() {
    check_all(
        vec![5, 5, 2],
        vec![
            LayerSpec::Conv2d { filters: 3, kernel: 3, relu: true },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ],
        2,
        Mode::Eval,
        1,
    );
}

#[test]
fn gradcheck_maxpool_and_normalize() {
    check_all(
        vec![6, 6, 1],
        vec![
            LayerSpec::Normalize { offset: 0.5, scale: 0.5 },
            LayerSpec::Conv2d { filters: 2, kernel: 3, relu: false },
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 3, relu: false },
            LayerSpec::Softmax,
        ],
        3,
        Mode::Eval,
        2,
    );
}

#[test]
fn gradcheck_dense_and_dropout() {
    check_all(
        vec![6],
        vec![
            LayerSpec::Dense { units: 5, relu: true },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 4, relu: false },
            LayerSpec::Softmax,
        ],
        4,
        TRAIN,
        3,
    );
}

#[test]
fn gradcheck_bilstm() {
    check_all(
        vec![4, 3, 1],
        vec![
            LayerSpec::SqueezeToSequence,
            LayerSpec::BiLstm { hidden: 3 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ],
        2,
        Mode::Eval,
        4,
    );
}

#[test]
fn gradcheck_stacked_bilstm() {
    check_all(
        vec![5, 2],
        vec![
            LayerSpec::BiLstm { hidden: 3 },
            LayerSpec::BiLstm { hidden: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 2, relu: false },
            LayerSpec::Softmax,
        ],
        2,
        Mode::Eval,
        5,
    );
}

fn reduced_config() -> CrnnConfig {
    CrnnConfig {
        input_height: 16,
        input_width: 16,
        conv1_filters: 2,
        conv2_filters: 3,
        conv3_filters: 2,
        lstm1_hidden: 3,
        lstm2_hidden: 2,
        dense_units: 4,
        ..CrnnConfig::default()
    }
}

#[test]
fn gradcheck_reduced_full_stack() {
    let cfg = reduced_config();
    check_all(vec![16, 16, 1], cfg.layers(2), 2, TRAIN, 6);
}

#[test]
fn logits_gradient_is_closed_form() {
    let mut net = Network::new(vec![16, 16, 1], reduced_config().layers(4), names(4), 0).unwrap();
    randomize(&mut net, 8, 0.5);
    let batch = random_batch(&[16, 16, 1], 3, 9);
    let labels = [2, 0, 3];
    let pass = net.forward(&batch, TRAIN).unwrap();
    let grads = net.backward(&pass, &labels).unwrap();
    for s in 0..3 {
        for c in 0..4 {
            let onehot = if labels[s] == c { 1.0 } else { 0.0 };
            let expected = (pass.probs.data()[s * 4 + c] - onehot) / 3.0;
            assert!((grads.logits.data()[s * 4 + c] - expected).abs() < 1e-12);
        }
        let row = &pass.probs.data()[s * 4..(s + 1) * 4];
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn conv_pre_activation_is_linear_in_weights() {
    let mut net = build_crnn32(names(2), &CrnnConfig::default()).unwrap();
    net.params[2][1].fill(0.0);
    let batch = random_batch(&[32, 32, 1], 1, 3);
    let a = net.forward(&batch, Mode::Eval).unwrap().pre_activation(0, 2).unwrap().to_vec();
    net.params[2][0].iter_mut().for_each(|w| *w *= 2.0);
    let b = net.forward(&batch, Mode::Eval).unwrap().pre_activation(0, 2).unwrap().to_vec();
    for (x, y) in a.iter().zip(&b) {
        assert!((2.0 * x - y).abs() < 1e-9);
    }
}

#[test]
fn zero_rate_dropout_matches_eval() {
    let cfg = CrnnConfig {
        pool_dropout: 0.0,
        head_dropout: 0.0,
        ..reduced_config()
    };
    let mut net = Network::new(vec![16, 16, 1], cfg.layers(2), names(2), 1).unwrap();
    randomize(&mut net, 2, 0.5);
    let batch = random_batch(&[16, 16, 1], 2, 3);
    let train = net.forward(&batch, TRAIN).unwrap();
    let eval = net.forward(&batch, Mode::Eval).unwrap();
    assert_eq!(train.probs, eval.probs);
}

#[test]
fn eval_forward_leaves_parameters_untouched() {
    let net = build_crnn32(names(4), &CrnnConfig::default()).unwrap();
    let before = net.flat_params();
    let batch = random_batch(&[32, 32, 1], 2, 4);
    let a = net.forward(&batch, Mode::Eval).unwrap().probs;
    let b = net.forward(&batch, Mode::Eval).unwrap().probs;
    assert_eq!(a, b);
    assert_eq!(before, net.flat_params());
}

#[test]
fn bilstm_first_output_sees_the_last_input() {
    let dims = LstmDims { steps: 6, input: 3, hidden: 4 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params: Vec<Vec<f64>> = [12 * 4, 16 * 4, 16, 12 * 4, 16 * 4, 16]
        .iter()
        .map(|&n| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let x: Vec<f64> = (0..18).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (a, _) = bilstm_forward(&dims, &x, &params);
    let mut y = x.clone();
    y[17] += 0.5;
    let (b, _) = bilstm_forward(&dims, &y, &params);
    // forward half at t = 0 cannot see the future, backward half must
    assert_eq!(a[..4], b[..4]);
    assert!(a[4..8].iter().zip(&b[4..8]).any(|(p, q)| (p - q).abs() > 1e-6));
}

#[test]
fn saturated_correct_outputs_have_vanishing_gradients() {
    let mut net = Network::new(vec![16, 16, 1], reduced_config().layers(2), names(2), 3).unwrap();
    let last = net.specs().len() - 2;
    net.params[last][1] = vec![60.0, -60.0];
    let batch = random_batch(&[16, 16, 1], 2, 5);
    let pass = net.forward(&batch, TRAIN).unwrap();
    let grads = net.backward(&pass, &[0, 0]).unwrap();
    let norm = grads.params.iter().flatten().flatten().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm < 1e-6, "{norm}");
}

#[test]
fn short_training_is_finite_and_deterministic() {
    let images: Vec<Vec<f64>> = (0..12).map(|i| random_batch(&[16, 16, 1], 1, 100 + i).into_data()).collect();
    let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = Network::new(vec![16, 16, 1], reduced_config().layers(2), names(2), 1).unwrap();
        let h = fit(&mut net, &images, &labels, None, &cfg).unwrap();
        (net.params, h)
    };
    let (pa, ha) = run();
    let (pb, hb) = run();
    assert_eq!(pa, pb);
    assert_eq!(ha, hb);
    assert_eq!(ha.len(), 50);
    assert!(ha.epochs.iter().all(|e| e.train_loss.is_finite()));
}
