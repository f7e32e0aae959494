//! Occlusion-based faithfulness evaluation.
//!
//! Clusters are occluded cumulatively in rank order and the images are
//! re-classified after each step, giving an erasure curve of accuracy,
//! ROC-AUC and target logit against the number of clusters erased.

mod agreement;
mod metrics;

pub use agreement::{
    agreement, selection_agreement, AgreementReport, AgreementStep, AnnotationMask, BLUE, ORANGE,
    RED, UNANNOTATED,
};
pub use metrics::{accuracy, roc_auc};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attribute, normalize_heatmap, AttributionMethod, Heatmap};
use crate::error::{Error, Result};
use crate::nn::{classify, Model};
use crate::selection::{select, ClusterSelection, SelectionConfig};
use crate::tensor::Tensor;

pub const DEFAULT_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OcclusionMode {
    /// Black out exactly the listed pixels.
    #[default]
    Mask,
    /// Black out the bounding box of the listed pixels.
    Square,
}

impl FromStr for OcclusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(OcclusionMode::Mask),
            "square" => Ok(OcclusionMode::Square),
            other => Err(Error::input(format!("unknown occlusion mode {other:?}"))),
        }
    }
}

impl fmt::Display for OcclusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OcclusionMode::Mask => "mask",
            OcclusionMode::Square => "square",
        })
    }
}

/// Row-major pixel positions that `mode` blacks out for `pixels`.
pub fn occlusion_targets(
    width: usize,
    height: usize,
    pixels: &[usize],
    mode: OcclusionMode,
) -> Result<Vec<usize>> {
    let n = width * height;
    if let Some(&p) = pixels.iter().find(|&&p| p >= n) {
        return Err(Error::input(format!(
            "pixel index {p} outside a {width}x{height} image"
        )));
    }
    match mode {
        OcclusionMode::Mask => Ok(pixels.to_vec()),
        OcclusionMode::Square => {
            if pixels.is_empty() {
                return Ok(Vec::new());
            }
            let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
            for &p in pixels {
                let (r, c) = (p / width, p % width);
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
            Ok((r0..=r1)
                .flat_map(|r| (c0..=c1).map(move |c| r * width + c))
                .collect())
        }
    }
}

/// Sets the given pixels of a raw `(C, H, W)` image to black in every channel.
pub fn occlude(image: &Tensor, pixels: &[usize], mode: OcclusionMode) -> Result<Tensor> {
    let [_, h, w] = *image.shape() else {
        return Err(Error::input("occlusion needs a (channels, height, width) image"));
    };
    let targets = occlusion_targets(w, h, pixels, mode)?;
    let mut out = image.clone();
    let plane = h * w;
    for channel in out.data_mut().chunks_mut(plane) {
        for &p in &targets {
            channel[p] = 0.0;
        }
    }
    Ok(out)
}

/// A raw image (`[0, 1]` pixels, before preprocessing) with its label.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    pub id: String,
    pub raw: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStep {
    pub image_id: String,
    pub step: usize,
    pub target_logit: f64,
    pub predicted_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveStep {
    pub step: usize,
    pub clusters_erased: usize,
    pub accuracy: f64,
    /// `None` when the dataset holds a single class.
    pub roc_auc: Option<f64>,
    pub mean_target_logit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErasureCurve {
    pub method: String,
    pub selection: String,
    pub steps: Vec<CurveStep>,
    /// Per-image records ordered by image id, then step.
    pub images: Vec<ImageStep>,
}

impl ErasureCurve {
    /// Mean ROC-AUC over steps `1..=T`, if defined at every step.
    pub fn mean_auc(&self) -> Option<f64> {
        let steps = &self.steps[1..];
        if steps.is_empty() {
            return None;
        }
        let sum: Option<f64> = steps.iter().map(|s| s.roc_auc).sum();
        sum.map(|s| s / steps.len() as f64)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("step,clusters_erased,accuracy,roc_auc,mean_target_logit\n");
        for s in &self.steps {
            let auc = s.roc_auc.map(|a| a.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.step, s.clusters_erased, s.accuracy, auc, s.mean_target_logit
            ));
        }
        write_text(path.as_ref(), &out)
    }

    pub fn write_detail_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["image_id", "step", "target_logit", "predicted_class"])?;
        for r in &self.images {
            w.write_record([
                r.image_id.clone(),
                r.step.to_string(),
                r.target_logit.to_string(),
                r.predicted_class.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Everything computed for one image before occlusion starts.
struct Prepared {
    target: usize,
    clean: Tensor,
    selection: ClusterSelection,
}

fn softmax_prob(logits: &[f64], class: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    (logits[class] - max).exp() / denom
}

fn check_dataset(model: &Model, dataset: &[LabeledImage]) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let mut ids = HashSet::new();
    for item in dataset {
        if !ids.insert(item.id.as_str()) {
            return Err(Error::input(format!("duplicate image id {:?}", item.id)));
        }
        if item.label >= model.num_classes() {
            return Err(Error::input(format!(
                "image {:?} has label {} but the model has {} classes",
                item.id,
                item.label,
                model.num_classes()
            )));
        }
        model.check_input(&item.raw)?;
    }
    Ok(())
}

/// Erasure curve using the configured selection method.
pub fn erasure_curve(
    model: &Model,
    dataset: &[LabeledImage],
    method: AttributionMethod,
    config: &SelectionConfig,
    steps: usize,
    mode: OcclusionMode,
) -> Result<ErasureCurve> {
    erasure_curve_with(model, dataset, method, steps, mode, config.method.name(), |h, _| {
        select(h, config)
    })
}

/// Erasure curve with a caller-supplied selector, which receives each
/// image's normalized heatmap and the image itself.
///
/// The attribution target of each image is its clean-image prediction and
/// stays fixed while clusters `1..=t` are occluded at step `t`. Images with
/// fewer than `t` clusters stay fully occluded. Per-image work runs on the current
/// rayon pool; aggregation follows image-id order, so results do not depend
/// on the number of threads.
pub fn erasure_curve_with<F>(
    model: &Model,
    dataset: &[LabeledImage],
    method: AttributionMethod,
    steps: usize,
    mode: OcclusionMode,
    selection_name: &str,
    selector: F,
) -> Result<ErasureCurve>
where
    F: Fn(&Heatmap, &LabeledImage) -> Result<ClusterSelection> + Sync,
{
    check_dataset(model, dataset)?;
    let mut order: Vec<&LabeledImage> = dataset.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let prepared: Vec<Prepared> = order
        .par_iter()
        .map(|item| {
            let input = model.preprocess(&item.raw)?;
            let (target, clean) = classify(model, &input)?;
            let heatmap = attribute(model, &input, target, method)?.with_image_id(item.id.clone());
            let selection = selector(&normalize_heatmap(&heatmap), item)?;
            Ok(Prepared {
                target,
                clean,
                selection,
            })
        })
        .collect::<Result<_>>()?;

    let total_steps = steps;

    // logits[image][step]
    let logits: Vec<Vec<Tensor>> = order
        .par_iter()
        .zip(&prepared)
        .map(|(item, prep)| {
            let mut per_step = Vec::with_capacity(total_steps + 1);
            per_step.push(prep.clean.clone());
            for t in 1..=total_steps {
                if t > prep.selection.len() {
                    let last = per_step.last().unwrap().clone();
                    per_step.push(last);
                    continue;
                }
                let occluded = occlude(&item.raw, &prep.selection.cumulative_pixels(t), mode)?;
                let (_, l) = classify(model, &model.preprocess(&occluded)?)?;
                per_step.push(l);
            }
            Ok(per_step)
        })
        .collect::<Result<_>>()?;

    let positive = model.positive_class();
    let labels: Vec<usize> = order.iter().map(|i| i.label).collect();
    let is_positive: Vec<bool> = labels.iter().map(|&l| l == positive).collect();
    let mut curve_steps = Vec::with_capacity(total_steps + 1);
    for t in 0..=total_steps {
        let predictions: Vec<usize> = logits.iter().map(|l| l[t].argmax()).collect();
        let scores: Vec<f64> = logits
            .iter()
            .map(|l| softmax_prob(l[t].data(), positive))
            .collect();
        let auc = match roc_auc(&scores, &is_positive) {
            Ok(a) => Some(a),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let mean_target_logit = logits
            .iter()
            .zip(&prepared)
            .map(|(l, p)| l[t].data()[p.target])
            .sum::<f64>()
            / order.len() as f64;
        curve_steps.push(CurveStep {
            step: t,
            clusters_erased: t,
            accuracy: accuracy(&predictions, &labels)?,
            roc_auc: auc,
            mean_target_logit,
        });
    }

    let images = order
        .iter()
        .zip(&prepared)
        .zip(&logits)
        .flat_map(|((item, prep), per_step)| {
            per_step.iter().enumerate().map(move |(t, l)| ImageStep {
                image_id: item.id.clone(),
                step: t,
                target_logit: l.data()[prep.target],
                predicted_class: l.argmax(),
            })
        })
        .collect();

    Ok(ErasureCurve {
        method: method.name().to_string(),
        selection: selection_name.to_string(),
        steps: curve_steps,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_leaves_image_unchanged() {
        let img = Tensor::filled(vec![3, 3, 3], 1.0);
        assert_eq!(occlude(&img, &[], OcclusionMode::Mask).unwrap(), img);
        assert_eq!(occlude(&img, &[], OcclusionMode::Square).unwrap(), img);
    }

    #[test]
    fn occlusion_is_idempotent() {
        let img = Tensor::filled(vec![1, 3, 3], 0.7);
        let once = occlude(&img, &[1, 5], OcclusionMode::Mask).unwrap();
        let twice = occlude(&once, &[1, 5], OcclusionMode::Mask).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn mask_versus_square() {
        let img = Tensor::filled(vec![3, 3, 3], 1.0);
        // pixels (0,0) and (2,2)
        let masked = occlude(&img, &[0, 8], OcclusionMode::Mask).unwrap();
        let black = |t: &Tensor| (0..9).filter(|&p| (0..3).all(|c| t.data()[c * 9 + p] == 0.0)).count();
        assert_eq!(black(&masked), 2);
        let square = occlude(&img, &[0, 8], OcclusionMode::Square).unwrap();
        assert_eq!(black(&square), 9);
        let partial = occlude(&img, &[1, 5], OcclusionMode::Square).unwrap();
        assert_eq!(black(&partial), 4);
    }

    #[test]
    fn out_of_range_pixel() {
        let img = Tensor::filled(vec![1, 2, 2], 1.0);
        assert!(occlude(&img, &[4], OcclusionMode::Mask).is_err());
    }

    #[test]
    fn softmax_is_normalized() {
        let p0 = softmax_prob(&[1.0, 2.0], 0);
        let p1 = softmax_prob(&[1.0, 2.0], 1);
        assert!((p0 + p1 - 1.0).abs() < 1e-15);
        assert!(p1 > p0);
    }
}
