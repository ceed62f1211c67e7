#![allow(dead_code)]

use lso::translate::{translate, LayerSizes, TranslationConfig, TranslationReport};
use lso::{Activation, AnnLayer, AnnNetwork, Matrix, NeuronParams, SnnNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_DIMS: [usize; 5] = [4, 16, 16, 8, 2];
pub const FIXTURE_GAIN: f64 = 150.0;
pub const TAU_SYN: f64 = 1e-3;

/// Random relu MLP with an identity output layer. Weights are uniform with
/// He-style spread; the first layer is multiplied by `gain` so hidden
/// activations land in the tens to hundreds.
pub fn mlp(seed: u64, dims: &[usize], gain: f64) -> AnnNetwork<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, d)| {
            let sd = (6.0 / d[0] as f64).sqrt() * if i == 0 { gain } else { 1.0 };
            let w = Matrix::from_fn(d[0], d[1], |_, _| rng.random_range(-1.0..1.0) * sd);
            let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
            AnnLayer::new(w, act)
        })
        .collect();
    AnnNetwork::new(layers).unwrap()
}

pub fn uniform(seed: u64, rows: usize, cols: usize) -> Matrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn fixture_ann() -> AnnNetwork<f64> {
    mlp(2024, &FIXTURE_DIMS, FIXTURE_GAIN)
}

pub fn fixture_samples() -> Matrix<f64> {
    uniform(7, 500, FIXTURE_DIMS[0])
}

pub fn fixture_config(sizes: LayerSizes) -> TranslationConfig {
    TranslationConfig {
        rep: 5,
        sizes,
        seed: 11,
        ..TranslationConfig::default()
    }
}

pub fn fixture_snn(sizes: LayerSizes) -> (SnnNetwork<f64>, TranslationReport) {
    translate(
        &fixture_ann(),
        &fixture_samples(),
        &fixture_config(sizes),
        &NeuronParams::default(),
        TAU_SYN,
    )
    .unwrap()
}
