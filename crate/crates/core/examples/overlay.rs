//! Renders a heatmap over its source image and writes the occlusion series
//! for the top clusters as PNG frames.
//!
//!     cargo run --example overlay [OUT_DIR]

use std::path::PathBuf;

use relevance_lens::io::{raw_to_image, save_png};
use relevance_lens::render::{overlay, render_occlusion_series};
use relevance_lens::synthetic::{planted_image, planted_model, PlantedSpec};
use relevance_lens::{
    attribute, classify, select, AttributionMethod, OcclusionMode, SelectionConfig,
    SelectionMethod,
};

fn main() -> relevance_lens::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("relevance-lens-examples"));
    std::fs::create_dir_all(&dir).unwrap();

    let spec = PlantedSpec::default();
    let model = planted_model(&spec, 6);
    let raw = planted_image(&spec, true, 6);
    let image = raw_to_image(&raw)?;
    let (target, _) = classify(&model, &model.preprocess(&raw)?)?;
    let heatmap = attribute(&model, &model.preprocess(&raw)?, target, AttributionMethod::Gradient)?;

    save_png(&image, dir.join("source.png"))?;
    save_png(&overlay(&image, &heatmap, 0.5)?, dir.join("overlay.png"))?;

    let sel = select(&heatmap, &SelectionConfig::new(SelectionMethod::Bins).with_clusters(4))?;
    let frames = render_occlusion_series(&image, &sel, sel.len(), OcclusionMode::Square)?;
    for (t, frame) in frames.iter().enumerate() {
        save_png(frame, dir.join(format!("occluded_{:02}.png", t + 1)))?;
    }
    println!("wrote source, overlay and {} frames to {}", frames.len(), dir.display());
    Ok(())
}
