use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::Layer;
use crate::tensor::Tensor;

/// Per-channel affine map from raw `[0, 1]` pixels to model input:
/// `x = (raw - mean[c]) * scale[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Preprocessing {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            scale: vec![1.0; channels],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }
}

/// A validated feed-forward network. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: [usize; 3],
    preprocessing: Preprocessing,
    class_labels: Vec<String>,
    layers: Vec<Layer>,
    /// `shapes[i]` is the input shape of layer `i`; the last entry is the output.
    shapes: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(
        input_shape: [usize; 3],
        preprocessing: Preprocessing,
        class_labels: Vec<String>,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::validation(
                None,
                format!("input shape {input_shape:?} has a zero dimension"),
            ));
        }
        if class_labels.is_empty() {
            return Err(Error::validation(None, "model declares no class labels"));
        }
        if layers.is_empty() {
            return Err(Error::validation(None, "model has no layers"));
        }
        let channels = input_shape[0];
        if preprocessing.mean.len() != channels || preprocessing.scale.len() != channels {
            return Err(Error::validation(
                None,
                format!("preprocessing must declare {channels} mean and scale values"),
            ));
        }
        if preprocessing.mean.iter().any(|m| !m.is_finite())
            || preprocessing.scale.iter().any(|s| !s.is_finite() || *s == 0.0)
        {
            return Err(Error::validation(
                None,
                "preprocessing values must be finite with non-zero scale",
            ));
        }

        let mut shapes = Vec::with_capacity(layers.len() + 1);
        shapes.push(input_shape.to_vec());
        for (i, layer) in layers.iter().enumerate() {
            layer
                .check_params()
                .map_err(|m| Error::validation(Some(i), m))?;
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|m| Error::validation(Some(i), m))?;
            shapes.push(next);
        }
        let out = shapes.last().unwrap();
        if out.len() != 1 || out[0] != class_labels.len() {
            return Err(Error::validation(
                Some(layers.len() - 1),
                format!(
                    "final output shape {out:?} does not match {} class labels",
                    class_labels.len()
                ),
            ));
        }

        Ok(Self {
            input_shape,
            preprocessing,
            class_labels,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn channels(&self) -> usize {
        self.input_shape[0]
    }

    pub fn height(&self) -> usize {
        self.input_shape[1]
    }

    pub fn width(&self) -> usize {
        self.input_shape[2]
    }

    pub fn preprocessing(&self) -> &Preprocessing {
        &self.preprocessing
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn num_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape of layer `i`, or the model output shape for `i == layers().len()`.
    pub fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Index of the class whose score drives ROC-AUC: the label named
    /// "malignant" if present, otherwise the last class.
    pub fn positive_class(&self) -> usize {
        self.class_labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case("malignant"))
            .unwrap_or(self.class_labels.len() - 1)
    }

    /// Applies the model's preprocessing to a raw `(C, H, W)` image in `[0, 1]`.
    pub fn preprocess(&self, raw: &Tensor) -> Result<Tensor> {
        self.check_input(raw)?;
        let plane = self.height() * self.width();
        let mut data = raw.data().to_vec();
        for (c, chunk) in data.chunks_mut(plane).enumerate() {
            let (m, s) = (self.preprocessing.mean[c], self.preprocessing.scale[c]);
            for v in chunk {
                *v = (*v - m) * s;
            }
        }
        Ok(Tensor::from_parts(raw.shape().to_vec(), data))
    }

    pub(crate) fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::input(format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::Dense;

    fn dense(i: usize, o: usize) -> Layer {
        Layer::Dense(Dense {
            in_features: i,
            out_features: o,
            weights: vec![0.1; i * o],
            bias: vec![0.0; o],
        })
    }

    #[test]
    fn shape_chain_mismatch_names_layer() {
        let err = Model::new(
            [1, 2, 3],
            Preprocessing::identity(1),
            vec!["a".into(), "b".into()],
            vec![Layer::Flatten, dense(4, 2)],
        )
        .unwrap_err();
        match err {
            Error::Validation { layer, .. } => assert_eq!(layer, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn output_must_match_labels() {
        let err = Model::new(
            [1, 2, 2],
            Preprocessing::identity(1),
            vec!["a".into(), "b".into(), "c".into()],
            vec![dense(4, 2)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { layer: Some(0), .. }));
    }

    #[test]
    fn preprocess_applies_mean_and_scale() {
        let m = Model::new(
            [1, 1, 2],
            Preprocessing {
                mean: vec![0.5],
                scale: vec![2.0],
            },
            vec!["a".into(), "b".into()],
            vec![dense(2, 2)],
        )
        .unwrap();
        let raw = Tensor::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(m.preprocess(&raw).unwrap().data(), &[-1.0, 1.0]);
    }

    #[test]
    fn positive_class_prefers_malignant_label() {
        let m = Model::new(
            [1, 1, 2],
            Preprocessing::identity(1),
            vec!["malignant".into(), "benign".into()],
            vec![dense(2, 2)],
        )
        .unwrap();
        assert_eq!(m.positive_class(), 0);
    }
}
