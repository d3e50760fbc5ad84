use fdd_nn::layers::LayerSpec;
use fdd_nn::{build_cnn_scaled, train, Dataset, Model, Network, NetworkSpec, NnError, Tensor, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn linear(dim: usize) -> NetworkSpec {
    NetworkSpec { input_shape: vec![dim], layers: vec![LayerSpec::FullyConnected { out_dim: dim, planes: 1 }], output_dim: dim }
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, learning_rate: 1e-2, seed: 3, validation_fraction: 0.2, ..Default::default() }
}

#[test]
fn identity_regression_converges() {
    let x = random(vec![200, 4], 1);
    let data = Dataset::new(x.clone(), x).unwrap();
    let out = train(Network::new(linear(4), 7).unwrap(), &data, &cfg(200)).unwrap();
    let val: Vec<f64> = out.history.iter().map(|e| e.validation.unwrap()).collect();
    for w in val[..5].windows(2) {
        assert!(w[1] < w[0], "{val:?}");
    }
    assert!(*val.last().unwrap() < 1e-3, "final {}", val.last().unwrap());
}

#[test]
fn fixed_seed_reproduces_history_and_parameters() {
    let x = random(vec![40, 2, 2, 2], 2);
    let y = random(vec![40, 8], 3);
    let data = Dataset::new(x, y).unwrap();
    let run = || train(Network::new(build_cnn_scaled(2, 2, 16).unwrap(), 1).unwrap(), &data, &cfg(3)).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
}

#[test]
fn constant_targets_are_fitted() {
    let x = random(vec![64, 3], 4);
    let y = Tensor::new(vec![64, 2], [1.5, -0.25].repeat(64)).unwrap();
    let spec = NetworkSpec {
        input_shape: vec![3],
        layers: vec![
            LayerSpec::FullyConnected { out_dim: 4, planes: 1 },
            LayerSpec::BatchNorm,
            LayerSpec::FullyConnected { out_dim: 2, planes: 1 },
        ],
        output_dim: 2,
    };
    let mut out = train(Network::new(spec, 2).unwrap(), &Dataset::new(x.clone(), y).unwrap(), &cfg(300)).unwrap();
    assert!(out.history.last().unwrap().train < 1e-3);
    let pred = out.model.predict(&x).unwrap();
    for row in pred.data().chunks(2) {
        assert!((row[0] - 1.5).abs() < 0.05 && (row[1] + 0.25).abs() < 0.05, "{row:?}");
    }
}

#[test]
fn divergence_reports_learning_rate() {
    let x = random(vec![16, 2], 5);
    let mut bad = x.clone();
    bad.data_mut()[3] = f64::NAN;
    let data = Dataset::new(bad, x).unwrap();
    let err = train(Network::new(linear(2), 0).unwrap(), &data, &TrainConfig { validation_fraction: 0.0, ..cfg(2) }).unwrap_err();
    match err {
        NnError::Diverged { learning_rate, .. } => assert_eq!(learning_rate, 1e-2),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn saved_model_predicts_identically() {
    let x = random(vec![30, 2, 1, 3], 6);
    let y = random(vec![30, 6], 7);
    let mut out = train(Network::new(build_cnn_scaled(1, 3, 16).unwrap(), 3).unwrap(), &Dataset::new(x.clone(), y).unwrap(), &cfg(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.model.save(&path).unwrap();
    let mut loaded = Model::load(&path).unwrap();
    assert_eq!(loaded.predict(&x).unwrap(), out.model.predict(&x).unwrap());
}
