//! Per-pixel attribution: gradient saliency and layer-wise relevance
//! propagation with the z- and epsilon-rules.

mod heatmap_file;

pub use heatmap_file::{read_heatmap, sidecar_path, write_heatmap, HeatmapSidecar};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Layer, Model};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 0.01;

/// Denominators smaller than this make the z-rule undefined.
pub const Z_RULE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum AttributionMethod {
    Gradient,
    LrpZ,
    LrpEpsilon { epsilon: f64 },
}

impl AttributionMethod {
    pub const NAMES: [&'static str; 3] = ["gradient", "lrp-z", "lrp-epsilon"];

    pub fn lrp_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::input(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(AttributionMethod::LrpEpsilon { epsilon })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AttributionMethod::Gradient => "gradient",
            AttributionMethod::LrpZ => "lrp-z",
            AttributionMethod::LrpEpsilon { .. } => "lrp-epsilon",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            AttributionMethod::LrpEpsilon { epsilon } => Some(*epsilon),
            _ => None,
        }
    }

    /// Parses a method name, using `epsilon` for `lrp-epsilon`.
    pub fn parse_with_epsilon(name: &str, epsilon: f64) -> Result<Self> {
        match name {
            "gradient" => Ok(AttributionMethod::Gradient),
            "lrp-z" => Ok(AttributionMethod::LrpZ),
            "lrp-epsilon" => Self::lrp_epsilon(epsilon),
            other => Err(Error::input(format!(
                "unknown attribution method {other:?}, expected one of {:?}",
                Self::NAMES
            ))),
        }
    }
}

impl fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_with_epsilon(s, DEFAULT_EPSILON)
    }
}

/// The value interval a normalized heatmap was mapped from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

/// Per-pixel relevance over the model's spatial input grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    pub method: AttributionMethod,
    pub target_class: usize,
    pub image_id: String,
    /// Set once the values have been normalized into `[0, 1]`.
    normalized_from: Option<ValueRange>,
}

impl Heatmap {
    pub fn new(
        width: usize,
        height: usize,
        values: Vec<f64>,
        method: AttributionMethod,
        target_class: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::input(format!(
                "heatmap {width}x{height} cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("heatmap values must be finite"));
        }
        Ok(Self {
            width,
            height,
            values,
            method,
            target_class,
            image_id: String::new(),
            normalized_from: None,
        })
    }

    pub fn with_image_id(mut self, id: impl Into<String>) -> Self {
        self.image_id = id.into();
        self
    }

    pub(crate) fn with_range(mut self, range: ValueRange) -> Self {
        self.normalized_from = Some(range);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized_from.is_some()
    }

    pub fn normalized_from(&self) -> Option<ValueRange> {
        self.normalized_from
    }

    /// Identifier used to tie cluster selections back to this heatmap.
    pub fn id(&self) -> String {
        format!("{}:{}:{}", self.image_id, self.method, self.target_class)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Maps values affinely onto `[0, 1]`; a constant heatmap maps to all zeros.
pub fn normalize_heatmap(h: &Heatmap) -> Heatmap {
    let (min, max) = h.min_max();
    let span = max - min;
    let values = if span > 0.0 {
        h.values.iter().map(|v| (v - min) / span).collect()
    } else {
        vec![0.0; h.values.len()]
    };
    let range = match h.normalized_from {
        Some(prev) => {
            let prev_span = prev.max - prev.min;
            ValueRange {
                min: prev.min + min * prev_span,
                max: prev.min + max * prev_span,
            }
        }
        None => ValueRange { min, max },
    };
    Heatmap {
        values,
        normalized_from: Some(range),
        ..h.clone()
    }
}

/// Gradient saliency: `max_c |∂logit_target / ∂x[c, i, j]|` per pixel.
pub fn gradient_saliency(model: &Model, input: &Tensor, target: usize) -> Result<Heatmap> {
    nn::check_target(model, target)?;
    let (_, trace) = nn::forward(model, input)?;
    let grad = nn::backward(model, &trace, target)?;
    let plane = model.height() * model.width();
    let mut values = vec![0.0f64; plane];
    for channel in grad.data().chunks(plane) {
        for (acc, g) in values.iter_mut().zip(channel) {
            *acc = acc.max(g.abs());
        }
    }
    Heatmap::new(
        model.width(),
        model.height(),
        values,
        AttributionMethod::Gradient,
        target,
    )
}

/// Input relevance per channel, shaped like the model input.
///
/// Relevance starts as the target logit at the target output and is
/// redistributed layer by layer: weighted layers apply
/// `R_i = x_i · Σ_j w_ij · R_j / d_j` with `d_j = z_j` (z-rule) or
/// `d_j = z_j + ε·sign(z_j)` (epsilon-rule, `sign(0) = +1`); ReLU passes
/// relevance through; max-pooling gives everything to the window maximum.
pub fn lrp_relevance(
    model: &Model,
    input: &Tensor,
    target: usize,
    method: AttributionMethod,
) -> Result<Tensor> {
    let epsilon = match method {
        AttributionMethod::LrpZ => None,
        AttributionMethod::LrpEpsilon { epsilon } => {
            AttributionMethod::lrp_epsilon(epsilon)?;
            Some(epsilon)
        }
        AttributionMethod::Gradient => {
            return Err(Error::input("gradient is not an LRP method"));
        }
    };
    nn::check_target(model, target)?;
    let (logits, trace) = nn::forward(model, input)?;

    let mut relevance = Tensor::zeros(vec![model.num_classes()]);
    relevance.data_mut()[target] = logits.data()[target];

    for (i, layer) in model.layers().iter().enumerate().rev() {
        let x = trace.layer_input(i);
        relevance = match layer {
            Layer::Dense(_) | Layer::Conv2d(_) => {
                let z = trace.layer_output(i);
                let scaled = stabilized_ratio(i, z.data(), relevance.data(), epsilon)?;
                let back = match layer {
                    Layer::Dense(d) => d.transpose_apply(x.shape(), &scaled),
                    Layer::Conv2d(c) => c.transpose_apply(x.shape(), &scaled),
                    _ => unreachable!(),
                };
                let data = back
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(c, xi)| xi * c)
                    .collect();
                Tensor::from_parts(x.shape().to_vec(), data)
            }
            Layer::Relu => relevance,
            Layer::MaxPool2d(p) => p.route(x, relevance.data()),
            Layer::Flatten => Tensor::from_parts(x.shape().to_vec(), relevance.into_data()),
        };
    }
    Ok(relevance)
}

/// `R_j / d_j` for every output neuron.
fn stabilized_ratio(
    layer: usize,
    z: &[f64],
    relevance: &[f64],
    epsilon: Option<f64>,
) -> Result<Vec<f64>> {
    z.iter()
        .zip(relevance)
        .enumerate()
        .map(|(j, (&zj, &rj))| {
            let d = match epsilon {
                Some(eps) => zj + if zj >= 0.0 { eps } else { -eps },
                None => zj,
            };
            if d.abs() < Z_RULE_GUARD {
                return Err(Error::Numerical {
                    layer,
                    message: format!(
                        "z-rule denominator {d:e} at neuron {j} is too close to zero; \
                         use the lrp-epsilon method instead"
                    ),
                });
            }
            Ok(rj / d)
        })
        .collect()
}

/// LRP heatmap: input relevance summed over channels.
pub fn lrp(
    model: &Model,
    input: &Tensor,
    target: usize,
    method: AttributionMethod,
) -> Result<Heatmap> {
    let relevance = lrp_relevance(model, input, target, method)?;
    let plane = model.height() * model.width();
    let mut values = vec![0.0; plane];
    for channel in relevance.data().chunks(plane) {
        for (acc, r) in values.iter_mut().zip(channel) {
            *acc += r;
        }
    }
    Heatmap::new(model.width(), model.height(), values, method, target)
}

/// Dispatches to [`gradient_saliency`] or [`lrp`].
pub fn attribute(
    model: &Model,
    input: &Tensor,
    target: usize,
    method: AttributionMethod,
) -> Result<Heatmap> {
    match method {
        AttributionMethod::Gradient => gradient_saliency(model, input, target),
        _ => lrp(model, input, target, method),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Preprocessing};

    fn single_dense(weights: Vec<f64>, bias: Vec<f64>) -> Model {
        let out = bias.len();
        Model::new(
            [1, 2, 2],
            Preprocessing::identity(1),
            (0..out).map(|i| i.to_string()).collect(),
            vec![Layer::Dense(Dense {
                in_features: 4,
                out_features: out,
                weights,
                bias,
            })],
        )
        .unwrap()
    }

    fn img(v: [f64; 4]) -> Tensor {
        Tensor::new(vec![1, 2, 2], v.to_vec()).unwrap()
    }

    #[test]
    fn gradient_of_linear_model_is_abs_weight_row() {
        let m = single_dense(vec![1., -2., 3., -4., 0., 0., 0., 0.], vec![0., 0.]);
        let h = gradient_saliency(&m, &img([0.3, 0.1, 0.2, 0.9]), 0).unwrap();
        assert_eq!(h.values(), &[1., 2., 3., 4.]);
        assert_eq!((h.width(), h.height()), (2, 2));
    }

    #[test]
    fn dead_pixel_has_zero_saliency() {
        let m = single_dense(vec![1., 0., 3., 4., 1., 0., 1., 1.], vec![0., 0.]);
        let h = gradient_saliency(&m, &img([0.3, 0.1, 0.2, 0.9]), 1).unwrap();
        assert_eq!(h.values()[1], 0.0);
    }

    #[test]
    fn lrp_z_single_dense_is_exact() {
        let w = vec![0.5, 1.5, 2.0, 0.25, 1., 1., 1., 1.];
        let m = single_dense(w.clone(), vec![0., 0.]);
        let x = [0.4, 0.3, 0.2, 0.1];
        let h = lrp(&m, &img(x), 0, AttributionMethod::LrpZ).unwrap();
        let logit: f64 = (0..4).map(|i| x[i] * w[i]).sum();
        for i in 0..4 {
            assert!((h.values()[i] - x[i] * w[i]).abs() < 1e-15);
        }
        assert!((h.values().iter().sum::<f64>() - logit).abs() < 1e-12);
    }

    #[test]
    fn lrp_z_zero_denominator_names_layer() {
        // Target logit is exactly zero, so d_j = 0 at the output layer.
        let m = single_dense(vec![1., -1., 0., 0., 1., 1., 1., 1.], vec![0., 0.]);
        let err = lrp(&m, &img([0.5, 0.5, 0.0, 0.0]), 0, AttributionMethod::LrpZ).unwrap_err();
        match err {
            Error::Numerical { layer, message } => {
                assert_eq!(layer, 0);
                assert!(message.contains("lrp-epsilon"));
            }
            other => panic!("unexpected {other:?}"),
        }
        // epsilon rule survives the same input
        assert!(lrp(
            &m,
            &img([0.5, 0.5, 0.0, 0.0]),
            0,
            AttributionMethod::LrpEpsilon { epsilon: 0.01 }
        )
        .is_ok());
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert!(AttributionMethod::lrp_epsilon(0.0).is_err());
        assert!(AttributionMethod::lrp_epsilon(-1.0).is_err());
        let m = single_dense(vec![1.; 8], vec![0., 0.]);
        let bad = AttributionMethod::LrpEpsilon { epsilon: -0.1 };
        assert!(lrp(&m, &img([0.1; 4]), 0, bad).is_err());
    }

    #[test]
    fn per_layer_conservation_with_bias() {
        let w = vec![0.5, 1.5, 2.0, 0.25, 1., 1., 1., 1.];
        let b = 0.3;
        let m = single_dense(w.clone(), vec![b, 0.]);
        let x = [0.4, 0.3, 0.2, 0.1];
        let z: f64 = b + (0..4).map(|i| x[i] * w[i]).sum::<f64>();
        for method in [AttributionMethod::LrpZ, AttributionMethod::LrpEpsilon { epsilon: 0.05 }] {
            let h = lrp(&m, &img(x), 0, method).unwrap();
            let d = z + method.epsilon().unwrap_or(0.0);
            let expected = z * (z - b) / d;
            assert!((h.values().iter().sum::<f64>() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_examples() {
        let mk = |v: Vec<f64>| Heatmap::new(v.len(), 1, v, AttributionMethod::Gradient, 0).unwrap();
        assert_eq!(normalize_heatmap(&mk(vec![2., 4., 6.])).values(), &[0., 0.5, 1.]);
        assert_eq!(normalize_heatmap(&mk(vec![3., 3., 3.])).values(), &[0., 0., 0.]);
        assert_eq!(normalize_heatmap(&mk(vec![-1., 0., 3.])).values(), &[0., 0.25, 1.]);
        let n = normalize_heatmap(&mk(vec![-1., 0., 3.]));
        assert_eq!(n.normalized_from(), Some(ValueRange { min: -1., max: 3. }));
        // normalizing twice keeps the original range
        assert_eq!(normalize_heatmap(&n), n);
    }

    #[test]
    fn method_names_parse() {
        for name in AttributionMethod::NAMES {
            assert_eq!(name.parse::<AttributionMethod>().unwrap().name(), name);
        }
        assert!("lrp-ab".parse::<AttributionMethod>().is_err());
    }
}
