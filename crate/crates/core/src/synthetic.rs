//! Synthetic models and images with known ground truth.
//!
//! The planted-patch classifier scores class 1 ("malignant") as a
//! positive-weighted sum over a fixed square patch and nothing else, while
//! class 0 ("benign") is a constant threshold. Any faithful attribution
//! method must put all relevance for class 1 on the patch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::evaluation::LabeledImage;
use crate::nn::{Conv2d, Dense, Layer, MaxPool2d, Model, Padding, Preprocessing};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Top-left corner of the patch as (row, col).
    pub patch_origin: (usize, usize),
    pub patch_size: usize,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            channels: 3,
            height: 16,
            width: 16,
            patch_origin: (5, 9),
            patch_size: 4,
        }
    }
}

impl PlantedSpec {
    /// Row-major indices of the patch pixels, ascending.
    pub fn patch_pixels(&self) -> Vec<usize> {
        let (r0, c0) = self.patch_origin;
        (r0..r0 + self.patch_size)
            .flat_map(|r| (c0..c0 + self.patch_size).map(move |c| r * self.width + c))
            .collect()
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }
}

pub fn class_labels() -> Vec<String> {
    vec!["benign".into(), "malignant".into()]
}

/// Weights on the patch are drawn from `[1, 2)`; everything else is zero.
/// The class-0 bias sits at half the class-1 logit of a mid-gray patch.
/// Weights are `f32`-representable so the model survives a file round trip.
pub fn planted_model(spec: &PlantedSpec, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.channels * spec.plane();
    let mut malignant = vec![0.0; n];
    for c in 0..spec.channels {
        for p in spec.patch_pixels() {
            malignant[c * spec.plane() + p] = rng.random_range(1.0f32..2.0) as f64;
        }
    }
    let threshold = (malignant.iter().sum::<f64>() * 0.5) as f32 as f64;
    let mut weights = vec![0.0; n];
    weights.extend_from_slice(&malignant);
    Model::new(
        [spec.channels, spec.height, spec.width],
        Preprocessing::identity(spec.channels),
        class_labels(),
        vec![Layer::Dense(Dense {
            in_features: n,
            out_features: 2,
            weights,
            bias: vec![threshold, 0.0],
        })],
    )
    .expect("planted model is well-formed")
}

/// A raw image with uniform background noise. With `signal` the patch is
/// bright (`[0.8, 1]`), otherwise dark (`[0, 0.2]`).
pub fn planted_image(spec: &PlantedSpec, signal: bool, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..spec.channels * spec.plane())
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let patch = spec.patch_pixels();
    for c in 0..spec.channels {
        for &p in &patch {
            let base = if signal { 0.8 } else { 0.0 };
            data[c * spec.plane() + p] = base + rng.random_range(0.0..0.2);
        }
    }
    // quantize to 8 bits so images round-trip through PNG unchanged
    for v in &mut data {
        *v = (*v * 255.0).round() / 255.0;
    }
    Tensor::new(vec![spec.channels, spec.height, spec.width], data).unwrap()
}

/// `n` images alternating between signal (label 1) and no signal (label 0).
pub fn planted_dataset(spec: &PlantedSpec, n: usize, seed: u64) -> Vec<LabeledImage> {
    (0..n)
        .map(|i| {
            let signal = i % 2 == 0;
            LabeledImage {
                id: format!("img{i:03}"),
                raw: planted_image(spec, signal, seed.wrapping_mul(1000).wrapping_add(i as u64)),
                label: signal as usize,
            }
        })
        .collect()
}

/// A small conv → relu → maxpool → flatten → dense network with weights in
/// `[-0.5, 0.5)`, for demonstrations on genuinely convolutional models.
pub fn random_cnn(channels: usize, height: usize, width: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| rng.random_range(-0.5f32..0.5) as f64)
            .collect()
    };
    let filters = 4;
    let conv = Conv2d {
        in_channels: channels,
        out_channels: filters,
        kernel_h: 3,
        kernel_w: 3,
        stride: 1,
        padding: Padding::Same,
        weights: draw(filters * channels * 9),
        bias: draw(filters),
    };
    let pooled = filters * (height / 2) * (width / 2);
    Model::new(
        [channels, height, width],
        Preprocessing {
            mean: vec![0.5; channels],
            scale: vec![2.0; channels],
        },
        class_labels(),
        vec![
            Layer::Conv2d(conv),
            Layer::Relu,
            Layer::MaxPool2d(MaxPool2d {
                window_h: 2,
                window_w: 2,
                stride: 2,
            }),
            Layer::Flatten,
            Layer::Dense(Dense {
                in_features: pooled,
                out_features: 2,
                weights: draw(2 * pooled),
                bias: draw(2),
            }),
        ],
    )
    .expect("random cnn is well-formed")
}
