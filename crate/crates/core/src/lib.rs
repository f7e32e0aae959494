//! Attribution toolkit for small convolutional classifiers.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`nn`] loads a model from the `RLNS` file format and evaluates it,
//!    recording activations for backward passes.
//! 2. [`attribution`] turns a prediction into a per-pixel heatmap via
//!    gradient saliency, LRP-Z or LRP-epsilon.
//! 3. [`selection`] groups heatmap pixels into importance-ranked clusters
//!    with value bins, k-means or mean shift.
//! 4. [`evaluation`] occludes clusters in rank order, re-classifies, and
//!    reports erasure curves (accuracy, ROC-AUC, target logit) as well as
//!    agreement with annotation masks.
//!
//! [`io`] and [`render`] cover image, manifest and mask files plus heatmap
//! visualizations; [`cli`] wires everything into the `relevance-lens` binary.

pub mod attribution;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod nn;
pub mod render;
pub mod selection;
pub mod synthetic;
pub mod tensor;

pub use attribution::{
    attribute, gradient_saliency, lrp, normalize_heatmap, AttributionMethod, Heatmap,
};
pub use error::{Error, Result};
pub use evaluation::{
    accuracy, agreement, erasure_curve, occlude, roc_auc, AgreementReport, AnnotationMask,
    ErasureCurve, LabeledImage, OcclusionMode,
};
pub use nn::{backward, classify, forward, load_model, save_model, ActivationTrace, Layer, Model};
pub use selection::{
    select, select_bins, select_kmeans, select_meanshift, Bandwidth, ClusterSelection,
    SelectionConfig, SelectionMethod,
};
pub use tensor::Tensor;
