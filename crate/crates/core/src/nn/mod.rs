//! Minimal feed-forward CNN engine.

pub mod format;
pub mod layer;
pub mod model;

pub use format::{decode_model, encode_model, load_model, save_model};
pub use layer::{Conv2d, Dense, Layer, MaxPool2d, Padding};
pub use model::{Model, Preprocessing};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Activations captured during one forward pass.
///
/// `activations[i]` is the input to layer `i` and `activations[i + 1]` its
/// output, so the last entry holds the logits.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    activations: Vec<Tensor>,
}

impl ActivationTrace {
    /// Number of layers recorded.
    pub fn len(&self) -> usize {
        self.activations.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn layer_input(&self, layer: usize) -> &Tensor {
        &self.activations[layer]
    }

    pub fn layer_output(&self, layer: usize) -> &Tensor {
        &self.activations[layer + 1]
    }

    pub fn logits(&self) -> &Tensor {
        self.activations.last().unwrap()
    }

    fn matches(&self, model: &Model) -> bool {
        self.activations.len() == model.layers().len() + 1
            && self
                .activations
                .iter()
                .enumerate()
                .all(|(i, a)| a.shape() == model.shape_at(i))
    }
}

/// Runs the network on an already-preprocessed input.
pub fn forward(model: &Model, input: &Tensor) -> Result<(Tensor, ActivationTrace)> {
    model.check_input(input)?;
    let mut activations = Vec::with_capacity(model.layers().len() + 1);
    activations.push(input.clone());
    for layer in model.layers() {
        let next = layer.forward(activations.last().unwrap());
        activations.push(next);
    }
    let logits = activations.last().unwrap().clone();
    if !logits.is_finite() {
        return Err(Error::Numerical {
            layer: model.layers().len() - 1,
            message: "forward pass produced non-finite logits".into(),
        });
    }
    Ok((logits, ActivationTrace { activations }))
}

pub(crate) fn check_target(model: &Model, target: usize) -> Result<()> {
    if target >= model.num_classes() {
        return Err(Error::input(format!(
            "target class {target} out of range for {} classes",
            model.num_classes()
        )));
    }
    Ok(())
}

pub(crate) fn check_trace(model: &Model, trace: &ActivationTrace) -> Result<()> {
    if !trace.matches(model) {
        return Err(Error::input("activation trace was not produced by this model"));
    }
    Ok(())
}

/// Gradient of the pre-softmax logit of `target` with respect to the model input.
pub fn backward(model: &Model, trace: &ActivationTrace, target: usize) -> Result<Tensor> {
    check_trace(model, trace)?;
    check_target(model, target)?;
    let mut grad = Tensor::zeros(vec![model.num_classes()]);
    grad.data_mut()[target] = 1.0;
    for (i, layer) in model.layers().iter().enumerate().rev() {
        grad = layer.backward(trace.layer_input(i), &grad);
    }
    Ok(grad)
}

/// Predicted class (argmax, lowest index on ties) and the logits.
pub fn classify(model: &Model, input: &Tensor) -> Result<(usize, Tensor)> {
    let (logits, _) = forward(model, input)?;
    Ok((logits.argmax(), logits))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn identity_conv_then_dense() {
        let model = Model::new(
            [1, 1, 1],
            Preprocessing::identity(1),
            labels(1),
            vec![
                Layer::Conv2d(Conv2d {
                    in_channels: 1,
                    out_channels: 1,
                    kernel_h: 1,
                    kernel_w: 1,
                    stride: 1,
                    padding: Padding::Same,
                    weights: vec![1.0],
                    bias: vec![0.0],
                }),
                Layer::Flatten,
            ],
        )
        .unwrap();
        let x = Tensor::new(vec![1, 1, 1], vec![2.0]).unwrap();
        let (logits, trace) = forward(&model, &x).unwrap();
        assert_eq!(logits.data(), &[2.0]);
        assert_eq!(trace.len(), 2);
    }

    #[test]
    fn flattened_dense_matches_matrix_oracle() {
        // 2x2 image, weights 4x2 written column-wise as the oracle would.
        let w_cols = [[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25], [2.0, 1.0]];
        let mut weights = vec![0.0; 8];
        for (i, col) in w_cols.iter().enumerate() {
            for (j, w) in col.iter().enumerate() {
                weights[j * 4 + i] = *w;
            }
        }
        let model = Model::new(
            [1, 2, 2],
            Preprocessing::identity(1),
            labels(2),
            vec![
                Layer::Flatten,
                Layer::Dense(Dense {
                    in_features: 4,
                    out_features: 2,
                    weights,
                    bias: vec![0.0, 0.0],
                }),
            ],
        )
        .unwrap();
        let x = [0.2, 0.4, 0.6, 0.8];
        let expected: Vec<f64> = (0..2)
            .map(|j| (0..4).map(|i| x[i] * w_cols[i][j]).sum())
            .collect();
        let (logits, _) = forward(&model, &Tensor::new(vec![1, 2, 2], x.to_vec()).unwrap()).unwrap();
        for (a, b) in logits.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_gradient_is_weight_row() {
        let weights = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let model = Model::new(
            [1, 2, 2],
            Preprocessing::identity(1),
            labels(2),
            vec![Layer::Dense(Dense {
                in_features: 4,
                out_features: 2,
                weights,
                bias: vec![0.0, 0.0],
            })],
        )
        .unwrap();
        let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (_, trace) = forward(&model, &x).unwrap();
        let g = backward(&model, &trace, 1).unwrap();
        assert_eq!(g.shape(), &[1, 2, 2]);
        assert_eq!(g.data(), &[5.0, 6.0, 7.0, 8.0]);
        assert!(matches!(backward(&model, &trace, 2), Err(Error::Input(_))));
    }

    #[test]
    fn classify_breaks_ties_low() {
        let model = Model::new(
            [1, 1, 1],
            Preprocessing::identity(1),
            labels(2),
            vec![Layer::Dense(Dense {
                in_features: 1,
                out_features: 2,
                weights: vec![0.0, 0.0],
                bias: vec![0.5, 0.5],
            })],
        )
        .unwrap();
        let (c, _) = classify(&model, &Tensor::filled(vec![1, 1, 1], 1.0)).unwrap();
        assert_eq!(c, 0);
    }

    #[test]
    fn shape_mismatch_is_input_error() {
        let model = Model::new(
            [1, 1, 2],
            Preprocessing::identity(1),
            labels(1),
            vec![Layer::Dense(Dense {
                in_features: 2,
                out_features: 1,
                weights: vec![1.0, 1.0],
                bias: vec![0.0],
            })],
        )
        .unwrap();
        let x = Tensor::filled(vec![1, 2, 1], 1.0);
        assert!(matches!(forward(&model, &x), Err(Error::Input(_))));
    }
}
