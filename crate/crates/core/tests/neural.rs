use rand::Rng;
use utg_core::neural::*;
use utg_core::rng::{derive_seed, rng_from_seed, SimRng};

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random_input(rng: &mut SimRng, shape: &[usize], min_abs: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if v.abs() < min_abs {
                min_abs.copysign(v)
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Values that are pairwise at least 0.02 apart, shuffled, so max pooling
/// has no near ties.
fn spaced_input(rng: &mut SimRng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - 1.0 + rng.random_range(0.0..0.01)).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        data.swap(i, j);
    }
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn gradient_check(net: &mut Network<f64>, x: &Tensor<f64>, rng: &mut SimRng, training: bool) -> f64 {
    gradcheck::max_gradient_error(net, x, training, rng.random()).unwrap()
}

fn check_kind(name: &str, specs: &[LayerSpec], shape: &[usize], input: fn(&mut SimRng, &[usize]) -> Tensor<f64>, training: bool) {
    let mut rng = rng_from_seed(derive_seed(0xC4EC, name.len() as u64 * 31 + shape.len() as u64));
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let mut net = Network::<f64>::new(shape, specs, rng.random()).unwrap();
        // Non-trivial affine parameters for the normalization layer.
        for p in net.params_mut() {
            if p.shape().len() == 1 {
                for v in p.data_mut() {
                    *v += rng.random_range(-0.5..0.5);
                }
            }
        }
        let x = input(&mut rng, shape);
        let e = gradient_check(&mut net, &x, &mut rng, training);
        assert!(e <= 1e-3, "{name} trial {trial}: relative error {e}");
        worst = worst.max(e);
    }
    println!("{name}: max relative error {worst:.2e}");
}

fn smooth(rng: &mut SimRng, shape: &[usize]) -> Tensor<f64> {
    random_input(rng, shape, 0.0)
}

fn off_kink(rng: &mut SimRng, shape: &[usize]) -> Tensor<f64> {
    random_input(rng, shape, 0.01)
}

#[test]
fn gradient_conv1d() {
    check_kind("conv1d", &[LayerSpec::Conv1d { filters: 3, kernel: 4 }], &[2, 9], smooth, false);
}

#[test]
fn gradient_conv2d() {
    check_kind("conv2d", &[LayerSpec::Conv2d { filters: 3, kernel: 2 }], &[2, 4, 3], smooth, false);
    check_kind("conv2d_k3", &[LayerSpec::Conv2d { filters: 2, kernel: 3 }], &[2, 4, 5], smooth, false);
}

#[test]
fn gradient_instance_norm() {
    check_kind("instance_norm", &[LayerSpec::InstanceNorm], &[3, 5], smooth, false);
    check_kind("instance_norm_2d", &[LayerSpec::InstanceNorm], &[2, 3, 2], smooth, false);
}

#[test]
fn gradient_relu() {
    check_kind("relu", &[LayerSpec::Relu], &[2, 6], off_kink, false);
}

#[test]
fn gradient_dropout() {
    check_kind("dropout_train", &[LayerSpec::Dropout { rate: 0.3 }], &[2, 6], smooth, true);
    check_kind("dropout_eval", &[LayerSpec::Dropout { rate: 0.3 }], &[2, 6], smooth, false);
}

#[test]
fn gradient_maxpool() {
    check_kind("maxpool_1d", &[LayerSpec::MaxPool { size: 2 }], &[2, 7], spaced_input, false);
    check_kind("maxpool_2d", &[LayerSpec::MaxPool { size: 2 }], &[2, 5, 3], spaced_input, false);
}

#[test]
fn gradient_flatten_and_sequence() {
    check_kind("flatten", &[LayerSpec::Flatten, LayerSpec::Dense { units: 2 }], &[2, 3], smooth, false);
    check_kind("sequence", &[LayerSpec::Sequence, LayerSpec::Lstm { units: 3 }], &[2, 3, 2], smooth, false);
}

#[test]
fn gradient_dense() {
    check_kind("dense", &[LayerSpec::Dense { units: 4 }], &[7], smooth, false);
}

#[test]
fn gradient_sigmoid() {
    check_kind("sigmoid", &[LayerSpec::Sigmoid], &[6], smooth, false);
}

#[test]
fn gradient_lstm() {
    check_kind("lstm", &[LayerSpec::Lstm { units: 4 }], &[3, 5], smooth, false);
}

#[test]
fn gradient_small_pipeline() {
    let specs: Vec<LayerSpec> = conv_block(LayerSpec::Conv1d { filters: 3, kernel: 3 }, 0.2, 2)
        .into_iter()
        .chain([LayerSpec::Flatten, LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid])
        .collect();
    let mut rng = rng_from_seed(77);
    let mut trials = 0;
    while trials < 50 {
        let mut net = Network::<f64>::new(&[1, 12], &specs, rng.random()).unwrap();
        let x = smooth(&mut rng, &[1, 12]);
        // Central differences are meaningless across a ReLU kink or a pooling
        // tie, so only draws whose nonsmooth points are well clear of the
        // step are checked.
        let seed = rng.random::<u64>();
        // The checker replays dropout masks from the first draw of its seed.
        let mask_seed: u64 = rng_from_seed(seed).random();
        let trace = net.forward(&x, true, &mut rng_from_seed(mask_seed)).unwrap();
        let acts = trace.activations();
        let relu_in = acts[2].data();
        let pool_in = acts[4].data();
        let clear = relu_in.iter().all(|v| v.abs() > 1e-2)
            && pool_in.chunks(2).all(|w| w.len() < 2 || (w[0] - w[1]).abs() > 1e-2);
        if !clear {
            continue;
        }
        let e = gradcheck::max_gradient_error(&mut net, &x, true, seed).unwrap();
        assert!(e <= 1e-3, "trial {trials}: {e}");
        trials += 1;
    }
}

#[test]
fn forward_examples() {
    let mut rng = rng_from_seed(0);
    let net = Network::<f64>::new(&[1], &[LayerSpec::Sigmoid], 0).unwrap();
    assert_eq!(net.predict(&t64(&[1], &[0.0])).unwrap().data(), &[0.5]);

    let net = Network::<f64>::new(&[1, 4], &[LayerSpec::MaxPool { size: 2 }], 0).unwrap();
    assert_eq!(net.predict(&t64(&[1, 4], &[1.0, 3.0, 2.0, 8.0])).unwrap().data(), &[3.0, 8.0]);

    let mut net = Network::<f64>::new(&[1, 4], &[LayerSpec::Conv1d { filters: 1, kernel: 3 }], 0).unwrap();
    net.set_params(vec![t64(&[1, 1, 3], &[1.0, 0.0, -1.0]), t64(&[1], &[0.0])]).unwrap();
    let y = net.forward(&t64(&[1, 4], &[1.0, 2.0, 4.0, 7.0]), false, &mut rng).unwrap();
    assert_eq!(y.output().data(), &[-3.0, -5.0]);
}

#[test]
fn shape_errors_name_the_layer() {
    let err = Network::<f32>::new(&[1, 4], &[LayerSpec::Conv1d { filters: 1, kernel: 5 }], 0).unwrap_err();
    match err {
        NeuralError::Shape { layer, kind, .. } => assert_eq!((layer, kind), (0, "conv1d")),
        e => panic!("unexpected {e:?}"),
    }
    let err = Network::<f32>::new(&[4], &[LayerSpec::Relu, LayerSpec::Lstm { units: 2 }], 0).unwrap_err();
    assert!(matches!(err, NeuralError::Shape { layer: 1, kind: "lstm", .. }));
    let net = Network::<f32>::new(&[3], &[LayerSpec::Relu], 0).unwrap();
    assert!(matches!(net.predict(&Tensor::zeros(vec![4])), Err(NeuralError::Input { .. })));
    assert!(Network::<f32>::new(&[3], &[LayerSpec::Dropout { rate: 1.0 }], 0).is_err());
}

#[test]
fn non_finite_values_are_rejected() {
    let net = Network::<f64>::new(&[2], &[LayerSpec::Relu], 0).unwrap();
    assert!(matches!(net.predict(&t64(&[2], &[f64::NAN, 1.0])), Err(NeuralError::NonFinite { .. })));
}

#[test]
fn dense_gradient_of_linear_output() {
    let mut net = Network::<f64>::new(&[3], &[LayerSpec::Dense { units: 1 }], 0).unwrap();
    net.set_params(vec![t64(&[1, 3], &[0.3, -0.2, 0.9]), t64(&[1], &[0.1])]).unwrap();
    let x = t64(&[3], &[1.5, -2.0, 0.25]);
    let trace = net.forward(&x, false, &mut rng_from_seed(0)).unwrap();
    let mut g = net.zero_gradients();
    net.backward(&trace, &[1.0], &mut g).unwrap();
    assert_eq!(g.layers[0][0], vec![1.5, -2.0, 0.25]);
    assert_eq!(g.layers[0][1], vec![1.0]);
}

#[test]
fn dropout_eval_gradient_is_identity() {
    let net = Network::<f64>::new(&[4], &[LayerSpec::Dropout { rate: 0.5 }], 0).unwrap();
    let x = t64(&[4], &[1.0, 2.0, 3.0, 4.0]);
    let trace = net.forward(&x, false, &mut rng_from_seed(3)).unwrap();
    assert_eq!(trace.output().data(), x.data());
    let mut g = net.zero_gradients();
    let dx = net.backward(&trace, &[0.1, 0.2, 0.3, 0.4], &mut g).unwrap();
    assert_eq!(dx, vec![0.1, 0.2, 0.3, 0.4]);
}

#[test]
fn backward_rejects_mismatched_gradient() {
    let net = Network::<f64>::new(&[4], &[LayerSpec::Relu], 0).unwrap();
    let trace = net.forward(&t64(&[4], &[1.0; 4]), false, &mut rng_from_seed(0)).unwrap();
    let mut g = net.zero_gradients();
    assert!(net.backward(&trace, &[1.0], &mut g).is_err());
}

#[test]
fn instance_norm_statistics() {
    let net = Network::<f64>::new(&[4, 25], &[LayerSpec::InstanceNorm], 0).unwrap();
    let mut rng = rng_from_seed(8);
    for _ in 0..20 {
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..5.0)).collect();
        let y = net.predict(&t64(&[4, 25], &x)).unwrap();
        let n = y.len() as f64;
        let mean = y.data().iter().sum::<f64>() / n;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-6);
        assert!((var - 1.0).abs() <= 1e-4, "{var}");
    }
}

#[test]
fn first_adam_step_moves_by_learning_rate() {
    let mut net = Network::<f64>::new(&[3], &[LayerSpec::Dense { units: 1 }], 5).unwrap();
    let before: Vec<f64> = net.params().flat_map(|p| p.data().to_vec()).collect();
    let mut grads = net.zero_gradients();
    grads.layers[0][0] = vec![0.5, -2.0, 1e-3];
    grads.layers[0][1] = vec![0.0];
    let cfg = AdamConfig::default();
    let mut state = AdamState::new(&net);
    adam_step(&mut net, &mut state, &grads, &cfg);
    let after: Vec<f64> = net.params().flat_map(|p| p.data().to_vec()).collect();
    let g = [0.5, -2.0, 1e-3, 0.0];
    for i in 0..4 {
        let delta = after[i] - before[i];
        if g[i] == 0.0 {
            assert_eq!(delta, 0.0);
        } else {
            // m̂ = g and v̂ = g², so the step is lr · g / (|g| + ε).
            let expected = -cfg.learning_rate * g[i] / (g[i].abs() + cfg.epsilon);
            assert!((delta - expected).abs() < 1e-12, "{delta} vs {expected}");
            assert!((delta.abs() - cfg.learning_rate).abs() < 1e-7);
        }
    }
}

#[test]
fn zero_gradient_leaves_weights() {
    let mut net = Network::<f64>::new(&[3], &[LayerSpec::Dense { units: 2 }], 5).unwrap();
    let before = net.clone();
    let grads = net.zero_gradients();
    let mut state = AdamState::new(&net);
    for _ in 0..3 {
        adam_step(&mut net, &mut state, &grads, &AdamConfig::default());
    }
    assert_eq!(net, before);
}

fn toy_set() -> (Vec<Tensor<f32>>, Vec<f32>) {
    let mut rng = rng_from_seed(21);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..200 {
        let v: f32 = rng.random_range(-1.0..1.0);
        let v = if v.abs() < 0.1 { 0.1f32.copysign(v) } else { v };
        xs.push(Tensor::vector(vec![v]));
        ys.push(if v > 0.0 { 1.0 } else { 0.0 });
    }
    (xs, ys)
}

fn toy_net() -> Network<f32> {
    Network::new(&[1], &[LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid], 4).unwrap()
}

#[test]
fn separable_toy_set_is_learned() {
    let (xs, ys) = toy_set();
    let mut net = toy_net();
    let cfg = TrainConfig { batch_size: 10, max_epochs: 20, adam: AdamConfig { learning_rate: 0.05, ..Default::default() }, ..Default::default() };
    let report = train(&mut net, &xs, &ys, &cfg).unwrap();
    assert!(report.loss_history.len() <= 20);
    let correct = xs
        .iter()
        .zip(&ys)
        .filter(|(x, &y)| (net.predict(x).unwrap().data()[0] >= 0.5) == (y == 1.0))
        .count();
    assert_eq!(correct, xs.len());
}

#[test]
fn loss_is_non_increasing_on_toy_set() {
    let (xs, ys) = toy_set();
    let mut net = toy_net();
    let cfg = TrainConfig { batch_size: 10, max_epochs: 20, ..Default::default() };
    let report = train(&mut net, &xs, &ys, &cfg).unwrap();
    for w in report.loss_history.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{:?}", report.loss_history);
    }
    assert!(report.loss_history.last() < report.loss_history.first());
}

#[test]
fn training_is_deterministic_with_dropout() {
    let (xs, ys) = toy_set();
    let specs = [LayerSpec::Dense { units: 4 }, LayerSpec::Relu, LayerSpec::Dropout { rate: 0.3 }, LayerSpec::Dense { units: 1 }, LayerSpec::Sigmoid];
    let cfg = TrainConfig { batch_size: 16, max_epochs: 3, seed: 9, ..Default::default() };
    let run = || {
        let mut net = Network::<f32>::new(&[1], &specs, 1).unwrap();
        let r = train(&mut net, &xs, &ys, &cfg).unwrap();
        (net, r)
    };
    assert_eq!(run(), run());
}

#[test]
fn training_input_validation() {
    let (xs, mut ys) = toy_set();
    let mut net = toy_net();
    let zero = TrainConfig { max_epochs: 0, ..Default::default() };
    assert!(matches!(train(&mut net, &xs, &ys, &zero), Err(NeuralError::BadConfig(_))));
    ys[3] = 0.5;
    assert_eq!(train(&mut net, &xs, &ys, &TrainConfig::default()), Err(NeuralError::NonBinaryLabel(3)));
    assert_eq!(train(&mut net, &[], &[], &TrainConfig::default()), Err(NeuralError::EmptyDataset));
}
