//! Gradient, LRP-Z and LRP-epsilon heatmaps for a planted-patch classifier.
//! Each heatmap is written as a 16-bit PGM with a JSON sidecar plus a
//! rendered PNG.
//!
//!     cargo run --example saliency [OUT_DIR]

use std::path::PathBuf;

use relevance_lens::attribution::write_heatmap;
use relevance_lens::io::save_png;
use relevance_lens::render::{render_heatmap, Palette};
use relevance_lens::synthetic::{planted_image, planted_model, PlantedSpec};
use relevance_lens::{attribute, classify, AttributionMethod};

fn main() -> relevance_lens::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("relevance-lens-examples"));
    std::fs::create_dir_all(&dir).unwrap();

    let spec = PlantedSpec::default();
    let model = planted_model(&spec, 1);
    let input = model.preprocess(&planted_image(&spec, true, 1))?;
    let (target, logits) = classify(&model, &input)?;
    println!("predicted {} with logits {:?}", model.class_labels()[target], logits.data());

    let patch = spec.patch_pixels();
    for method in [
        AttributionMethod::Gradient,
        AttributionMethod::LrpZ,
        AttributionMethod::lrp_epsilon(0.01)?,
    ] {
        let h = attribute(&model, &input, target, method)?.with_image_id("planted");
        let on_patch: f64 = patch.iter().map(|&p| h.values()[p].abs()).sum();
        let total: f64 = h.values().iter().map(|v| v.abs()).sum();
        println!(
            "{:<12} sum {:>10.4}  share on patch {:.3}",
            method.name(),
            h.values().iter().sum::<f64>(),
            on_patch / total
        );
        write_heatmap(&h, dir.join(format!("{}.pgm", method.name())))?;
        save_png(&render_heatmap(&h, Palette::Diverging), dir.join(format!("{}.png", method.name())))?;
    }
    println!("heatmaps in {}", dir.display());
    Ok(())
}
