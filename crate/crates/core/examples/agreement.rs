//! Compares the cumulative clusters of a selection with a three-level
//! annotation mask (blue, orange, red) marking the planted patch and its
//! surroundings.
//!
//!     cargo run --example agreement

use relevance_lens::evaluation::{selection_agreement, BLUE, ORANGE, RED};
use relevance_lens::synthetic::{planted_image, planted_model, PlantedSpec};
use relevance_lens::{
    attribute, classify, select, AnnotationMask, AttributionMethod, SelectionConfig,
    SelectionMethod,
};

fn main() -> relevance_lens::Result<()> {
    let spec = PlantedSpec::default();
    let model = planted_model(&spec, 5);
    let input = model.preprocess(&planted_image(&spec, true, 5))?;
    let (target, _) = classify(&model, &input)?;
    let heatmap = attribute(&model, &input, target, AttributionMethod::lrp_epsilon(0.01)?)?;
    let sel = select(&heatmap, &SelectionConfig::new(SelectionMethod::KMeans).with_clusters(4))?;

    let (r0, c0) = spec.patch_origin;
    let n = spec.patch_size;
    let mut levels = vec![0u8; spec.width * spec.height];
    for r in 0..spec.height {
        for c in 0..spec.width {
            let inside = |m: usize| r + m >= r0 && r < r0 + n + m && c + m >= c0 && c < c0 + n + m;
            levels[r * spec.width + c] = if inside(0) {
                RED
            } else if inside(1) {
                ORANGE
            } else if inside(2) {
                BLUE
            } else {
                0
            };
        }
    }
    let mask = AnnotationMask::new(spec.width, spec.height, levels)?;

    let report = selection_agreement(&sel, &mask, None)?;
    println!("step  pixels  red    iou(red)  weighted");
    for s in &report.steps {
        println!(
            "{:>4}  {:>6}  {:.3}  {:.3}     {:.3}",
            s.step, s.occluded_pixels, s.fraction_red, s.iou_red, s.weighted_agreement
        );
    }
    Ok(())
}
