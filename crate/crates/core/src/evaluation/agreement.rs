//! Overlap between occluded pixel sets and pathologist annotation levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::ClusterSelection;

pub const UNANNOTATED: u8 = 0;
pub const BLUE: u8 = 1;
pub const ORANGE: u8 = 2;
pub const RED: u8 = 3;

/// Per-pixel annotation level: 0 unannotated, 1 blue, 2 orange, 3 red
/// (increasing diagnostic importance).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMask {
    width: usize,
    height: usize,
    levels: Vec<u8>,
}

impl AnnotationMask {
    pub fn new(width: usize, height: usize, levels: Vec<u8>) -> Result<Self> {
        if levels.len() != width * height {
            return Err(Error::input(format!(
                "mask {width}x{height} cannot hold {} levels",
                levels.len()
            )));
        }
        if let Some(bad) = levels.iter().find(|&&l| l > RED) {
            return Err(Error::input(format!(
                "annotation level {bad} is outside {{0, 1, 2, 3}}"
            )));
        }
        Ok(Self {
            width,
            height,
            levels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStep {
    pub step: usize,
    pub occluded_pixels: usize,
    pub fraction_unannotated: f64,
    pub fraction_blue: f64,
    pub fraction_orange: f64,
    pub fraction_red: f64,
    pub iou_red: f64,
    pub iou_red_orange: f64,
    pub iou_annotated: f64,
    /// Mean level weight of occluded pixels (red 3, orange 2, blue 1) over 3.
    pub weighted_agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub width: usize,
    pub height: usize,
    pub steps: Vec<AgreementStep>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Agreement statistics for each cumulative occluded set (`sets[t - 1]` is
/// the set after step `t`).
pub fn agreement(sets: &[Vec<usize>], mask: &AnnotationMask) -> Result<AgreementReport> {
    let n = mask.levels.len();
    let count_at_least = |min: u8| mask.levels.iter().filter(|&&l| l >= min).count();
    let (red_total, red_orange_total, annotated_total) =
        (count_at_least(RED), count_at_least(ORANGE), count_at_least(BLUE));

    let mut steps = Vec::with_capacity(sets.len());
    let mut occluded = vec![false; n];
    for (t, set) in sets.iter().enumerate() {
        occluded.fill(false);
        for &p in set {
            if p >= n {
                return Err(Error::input(format!(
                    "pixel {p} outside the {}x{} mask",
                    mask.width, mask.height
                )));
            }
            occluded[p] = true;
        }
        let mut per_level = [0usize; 4];
        for (p, &o) in occluded.iter().enumerate() {
            if o {
                per_level[mask.levels[p] as usize] += 1;
            }
        }
        let total: usize = per_level.iter().sum();
        let red = per_level[3];
        let red_orange = red + per_level[2];
        let annotated = red_orange + per_level[1];
        let weight = 3 * per_level[3] + 2 * per_level[2] + per_level[1];
        steps.push(AgreementStep {
            step: t + 1,
            occluded_pixels: total,
            fraction_unannotated: ratio(per_level[0], total),
            fraction_blue: ratio(per_level[1], total),
            fraction_orange: ratio(per_level[2], total),
            fraction_red: ratio(red, total),
            // |A ∩ B| / (|A| + |B| - |A ∩ B|)
            iou_red: ratio(red, total + red_total - red),
            iou_red_orange: ratio(red_orange, total + red_orange_total - red_orange),
            iou_annotated: ratio(annotated, total + annotated_total - annotated),
            weighted_agreement: ratio(weight, 3 * total),
        });
    }
    Ok(AgreementReport {
        width: mask.width,
        height: mask.height,
        steps,
    })
}

/// Agreement for the cumulative sets of clusters `1..=t`, `t = 1..=steps`
/// (all clusters when `steps` is `None`).
pub fn selection_agreement(
    selection: &ClusterSelection,
    mask: &AnnotationMask,
    steps: Option<usize>,
) -> Result<AgreementReport> {
    if (selection.width, selection.height) != (mask.width, mask.height) {
        return Err(Error::input(format!(
            "selection covers {}x{} but the mask is {}x{}",
            selection.width, selection.height, mask.width, mask.height
        )));
    }
    let steps = steps.unwrap_or(selection.len());
    let sets: Vec<Vec<usize>> = (1..=steps).map(|t| selection.cumulative_pixels(t)).collect();
    agreement(&sets, mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_mask() -> AnnotationMask {
        // 4x4 with a 2x2 red block in the top-left
        let mut levels = vec![0u8; 16];
        for p in [0, 1, 4, 5] {
            levels[p] = RED;
        }
        AnnotationMask::new(4, 4, levels).unwrap()
    }

    #[test]
    fn exact_red_match() {
        let r = agreement(&[vec![0, 1, 4, 5]], &block_mask()).unwrap();
        assert_eq!(r.steps[0].iou_red, 1.0);
        assert_eq!(r.steps[0].weighted_agreement, 1.0);
        assert_eq!(r.steps[0].fraction_red, 1.0);
    }

    #[test]
    fn disjoint_from_annotations() {
        let r = agreement(&[vec![10, 15]], &block_mask()).unwrap();
        let s = &r.steps[0];
        assert_eq!(
            (s.fraction_red, s.fraction_orange, s.fraction_blue),
            (0.0, 0.0, 0.0)
        );
        assert_eq!((s.iou_red, s.iou_red_orange, s.iou_annotated), (0.0, 0.0, 0.0));
        assert_eq!(s.weighted_agreement, 0.0);
    }

    #[test]
    fn block_plus_two_unannotated() {
        let r = agreement(&[vec![0, 1, 4, 5, 10, 15]], &block_mask()).unwrap();
        let s = &r.steps[0];
        assert_eq!(s.fraction_red, 4.0 / 6.0);
        assert_eq!(s.iou_red, 4.0 / 6.0);
        assert_eq!(s.weighted_agreement, 2.0 / 3.0);
        assert_eq!(s.fraction_unannotated, 2.0 / 6.0);
    }

    #[test]
    fn empty_set_reports_zeros() {
        let r = agreement(&[vec![]], &block_mask()).unwrap();
        assert_eq!(r.steps[0].occluded_pixels, 0);
        assert_eq!(r.steps[0].weighted_agreement, 0.0);
    }

    #[test]
    fn mask_level_bounds() {
        assert!(AnnotationMask::new(2, 1, vec![0, 4]).is_err());
        assert!(AnnotationMask::new(2, 2, vec![0, 1]).is_err());
        assert!(agreement(&[vec![16]], &block_mask()).is_err());
    }
}
