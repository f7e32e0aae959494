#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relevance_lens::nn::{Conv2d, Dense, Layer, MaxPool2d, Model, Padding, Preprocessing};
use relevance_lens::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub bias: bool,
    /// Weights and biases drawn from `[0, 1)` instead of `[-1, 1)`.
    pub positive: bool,
}

impl Draw {
    pub const SIGNED: Draw = Draw { bias: true, positive: false };
    pub const BIAS_FREE: Draw = Draw { bias: false, positive: false };
    pub const POSITIVE: Draw = Draw { bias: true, positive: true };

    fn weights(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let lo = if self.positive { 0.0 } else { -1.0 };
        (0..n).map(|_| rng.random_range(lo..1.0)).collect()
    }

    fn bias(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        if self.bias {
            let lo = if self.positive { 0.0 } else { -0.5 };
            (0..n).map(|_| rng.random_range(lo..0.5)).collect()
        } else {
            vec![0.0; n]
        }
    }

    pub fn conv(&self, rng: &mut ChaCha8Rng, cin: usize, cout: usize, k: usize, stride: usize, padding: Padding) -> Layer {
        Layer::Conv2d(Conv2d {
            in_channels: cin,
            out_channels: cout,
            kernel_h: k,
            kernel_w: k,
            stride,
            padding,
            weights: self.weights(rng, cout * cin * k * k),
            bias: self.bias(rng, cout),
        })
    }

    pub fn dense(&self, rng: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> Layer {
        Layer::Dense(Dense {
            in_features: n_in,
            out_features: n_out,
            weights: self.weights(rng, n_in * n_out),
            bias: self.bias(rng, n_out),
        })
    }
}

fn pool2() -> Layer {
    Layer::MaxPool2d(MaxPool2d {
        window_h: 2,
        window_w: 2,
        stride: 2,
    })
}

/// A random model with at most five layers and input at most 2x8x8. The
/// architecture is one of several conv/dense templates.
pub fn random_model(rng: &mut ChaCha8Rng, draw: Draw) -> Model {
    let c = rng.random_range(1..=2);
    let h = rng.random_range(2..=4) * 2;
    let w = rng.random_range(2..=4) * 2;
    let classes = rng.random_range(2..=4);
    let f = rng.random_range(1..=3);
    let padding = if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid };
    let template = rng.random_range(0..5);
    let layers = match template {
        0 => {
            let conv = draw.conv(rng, c, f, 3, 1, Padding::Same);
            let n = f * (h / 2) * (w / 2);
            vec![conv, Layer::Relu, pool2(), Layer::Flatten, draw.dense(rng, n, classes)]
        }
        1 => {
            let conv = draw.conv(rng, c, f, 3, 1, padding);
            let (oh, ow) = match padding {
                Padding::Same => (h, w),
                Padding::Valid => (h - 2, w - 2),
            };
            vec![conv, Layer::Relu, draw.dense(rng, f * oh * ow, classes)]
        }
        2 => {
            let hidden = rng.random_range(2..=8);
            vec![
                Layer::Flatten,
                draw.dense(rng, c * h * w, hidden),
                Layer::Relu,
                draw.dense(rng, hidden, classes),
            ]
        }
        3 => {
            let conv = draw.conv(rng, c, f, 2, 2, Padding::Valid);
            let n = f * (h / 4) * (w / 4);
            vec![conv, pool2(), Layer::Relu, draw.dense(rng, n, classes)]
        }
        _ => {
            let conv = draw.conv(rng, c, f, 3, 2, Padding::Same);
            let g = rng.random_range(1..=2);
            let conv2 = draw.conv(rng, f, g, 3, 1, Padding::Same);
            let n = g * h.div_ceil(2) * w.div_ceil(2);
            vec![conv, Layer::Relu, conv2, Layer::Relu, draw.dense(rng, n, classes)]
        }
    };
    Model::new([c, h, w], Preprocessing::identity(c), labels(classes), layers)
        .expect("random model is well-formed")
}

/// Dense -> ReLU -> Dense on a flat `[1, 1, n]` input.
pub fn two_layer_dense(rng: &mut ChaCha8Rng, draw: Draw) -> Model {
    let n = rng.random_range(2..=12);
    let hidden = rng.random_range(2..=8);
    let classes = rng.random_range(2..=4);
    let layers = vec![
        draw.dense(rng, n, hidden),
        Layer::Relu,
        draw.dense(rng, hidden, classes),
    ];
    Model::new([1, 1, n], Preprocessing::identity(1), labels(classes), layers).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, model: &Model, lo: f64) -> Tensor {
    let [c, h, w] = model.input_shape();
    let data = (0..c * h * w).map(|_| rng.random_range(lo..1.0)).collect();
    Tensor::new(vec![c, h, w], data).unwrap()
}

/// Every pre-activation value fed into a ReLU or produced by a weighted
/// layer, for guarding against switch points and zero denominators.
pub fn weighted_outputs(model: &Model, input: &Tensor) -> Vec<f64> {
    let (_, trace) = relevance_lens::forward(model, input).unwrap();
    let mut out = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        if matches!(layer, Layer::Conv2d(_) | Layer::Dense(_)) {
            out.extend_from_slice(trace.layer_output(i).data());
        }
    }
    out
}
