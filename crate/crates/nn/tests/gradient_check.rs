use fdd_nn::layers::{Layer, LayerSpec, Mode};
use fdd_nn::network::mse;
use fdd_nn::{Network, NetworkSpec, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
const DROPOUT_SEED: u64 = 77;

fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn loss_at(net: &mut Network, x: &Tensor, t: &Tensor) -> f64 {
    net.reseed(DROPOUT_SEED);
    let y = net.forward(x, Mode::Train).unwrap();
    mse(&y, t).unwrap().0
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter and input element.
fn max_gradient_error(spec: NetworkSpec, batch: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::new(spec.clone(), seed).unwrap();
    // Non-trivial batch-norm affines.
    for l in net.layers_mut() {
        if let Layer::BatchNorm(bn) = l {
            for g in bn.gamma.value.iter_mut() {
                *g = rng.random_range(0.5..1.5);
            }
            for b in bn.beta.value.iter_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(&spec.input_shape);
    let x = random_tensor(shape, &mut rng);
    let t = random_tensor(vec![batch, spec.output_dim], &mut rng);

    net.zero_grad();
    net.reseed(DROPOUT_SEED);
    let y = net.forward(&x, Mode::Train).unwrap();
    let (_, g) = mse(&y, &t).unwrap();
    let dx = net.backward(g).unwrap();
    let analytic: Vec<Vec<f64>> = net.params_mut().iter().map(|p| p.grad.clone()).collect();

    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = net.params_mut()[pi].value[j];
            net.params_mut()[pi].value[j] = orig + STEP;
            let lp = loss_at(&mut net, &x, &t);
            net.params_mut()[pi].value[j] = orig - STEP;
            let lm = loss_at(&mut net, &x, &t);
            net.params_mut()[pi].value[j] = orig;
            worst = worst.max(rel_err(a, (lp - lm) / (2.0 * STEP)));
        }
    }
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[j] += STEP;
        let mut xm = x.clone();
        xm.data_mut()[j] -= STEP;
        let n = (loss_at(&mut net, &xp, &t) - loss_at(&mut net, &xm, &t)) / (2.0 * STEP);
        worst = worst.max(rel_err(dx.data()[j], n));
    }
    worst
}

fn fc(out_dim: usize) -> LayerSpec {
    LayerSpec::FullyConnected { out_dim, planes: 1 }
}

fn flat_spec(input: usize, layers: Vec<LayerSpec>, out: usize) -> NetworkSpec {
    NetworkSpec { input_shape: vec![input], layers, output_dim: out }
}

fn image_spec(c: usize, h: usize, w: usize, layers: Vec<LayerSpec>, out: usize) -> NetworkSpec {
    NetworkSpec { input_shape: vec![c, h, w], layers, output_dim: out }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dense_gradients(i in 1usize..6, o in 1usize..6, b in 1usize..5, seed in 0u64..1000) {
        prop_assert!(max_gradient_error(flat_spec(i, vec![fc(o)], o), b, seed) < TOL);
    }

    #[test]
    fn batch_norm_feature_gradients(i in 1usize..5, h in 1usize..5, b in 2usize..6, seed in 0u64..1000) {
        let spec = flat_spec(i, vec![fc(h), LayerSpec::BatchNorm, fc(2)], 2);
        prop_assert!(max_gradient_error(spec, b, seed) < TOL);
    }

    #[test]
    fn batch_norm_channel_gradients(c in 1usize..3, h in 1usize..4, w in 1usize..4, b in 1usize..4, seed in 0u64..1000) {
        let layers = vec![LayerSpec::BatchNorm, LayerSpec::Flatten, fc(3)];
        prop_assert!(max_gradient_error(image_spec(c, h, w, layers, 3), b.max(2), seed) < TOL);
    }

    #[test]
    fn dropout_gradients(i in 2usize..6, b in 1usize..4, rate in 0.1f64..0.6, seed in 0u64..1000) {
        let spec = flat_spec(i, vec![fc(5), LayerSpec::Dropout { rate }, fc(2)], 2);
        prop_assert!(max_gradient_error(spec, b, seed) < TOL);
    }

    #[test]
    fn leaky_relu_gradients(i in 1usize..6, b in 1usize..4, seed in 0u64..1000) {
        let spec = flat_spec(i, vec![fc(6), LayerSpec::LeakyRelu { slope: 0.01 }, fc(2)], 2);
        prop_assert!(max_gradient_error(spec, b, seed) < TOL);
    }

    #[test]
    fn conv_gradients(c in 1usize..3, h in 1usize..5, w in 1usize..5, k in prop::sample::select(vec![1usize, 3, 5]), o in 1usize..3, seed in 0u64..1000) {
        let layers = vec![LayerSpec::Conv2d { kernel_h: k, kernel_w: k, out_channels: o }, LayerSpec::Flatten, fc(2)];
        prop_assert!(max_gradient_error(image_spec(c, h, w, layers, 2), 2, seed) < TOL);
    }

    #[test]
    fn max_pool_gradients(c in 1usize..3, h in 1usize..5, w in 1usize..5, seed in 0u64..1000) {
        let layers = vec![LayerSpec::MaxPool { kernel_h: 3, kernel_w: 3 }, LayerSpec::Flatten, fc(2)];
        prop_assert!(max_gradient_error(image_spec(c, h, w, layers, 2), 2, seed) < TOL);
    }
}

#[test]
fn convolutional_unit_stack_gradients() {
    let layers = vec![
        LayerSpec::Conv2d { kernel_h: 5, kernel_w: 5, out_channels: 3 },
        LayerSpec::BatchNorm,
        LayerSpec::LeakyRelu { slope: 0.01 },
        LayerSpec::MaxPool { kernel_h: 3, kernel_w: 3 },
        LayerSpec::Flatten,
        fc(6),
        LayerSpec::BatchNorm,
        LayerSpec::Dropout { rate: 0.2 },
        LayerSpec::FullyConnected { out_dim: 8, planes: 2 },
    ];
    assert!(max_gradient_error(image_spec(2, 2, 2, layers, 8), 3, 5) < TOL);
}

#[test]
fn perfect_fit_has_zero_gradients() {
    let spec = flat_spec(3, vec![fc(4), LayerSpec::BatchNorm, fc(2)], 2);
    let mut net = Network::new(spec, 1).unwrap();
    let x = random_tensor(vec![4, 3], &mut ChaCha8Rng::seed_from_u64(2));
    let t = net.forward(&x, Mode::Train).unwrap();
    net.zero_grad();
    let loss = net.loss_and_grad(&x, &t).unwrap();
    assert_eq!(loss, 0.0);
    assert!(net.params_mut().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
}

#[test]
fn gradients_scale_with_loss() {
    let spec = flat_spec(3, vec![fc(4), LayerSpec::LeakyRelu { slope: 0.1 }, fc(2)], 2);
    let mut net = Network::new(spec, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_tensor(vec![5, 3], &mut rng);
    let t = random_tensor(vec![5, 2], &mut rng);
    let grads = |net: &mut Network, c: f64| {
        net.zero_grad();
        let y = net.forward(&x, Mode::Train).unwrap();
        let (_, g) = mse(&y, &t).unwrap();
        let scaled = Tensor::new(g.shape().to_vec(), g.data().iter().map(|v| v * c).collect()).unwrap();
        net.backward(scaled).unwrap();
        net.params_mut().iter().flat_map(|p| p.grad.clone()).collect::<Vec<_>>()
    };
    let g1 = grads(&mut net, 1.0);
    let g3 = grads(&mut net, 3.0);
    for (a, b) in g1.iter().zip(&g3) {
        assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}
