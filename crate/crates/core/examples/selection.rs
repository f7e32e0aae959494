//! Clusters one heatmap with equal-width bins, k-means and mean shift and
//! prints the ranked clusters.
//!
//!     cargo run --example selection

use relevance_lens::synthetic::{planted_image, planted_model, PlantedSpec};
use relevance_lens::{
    attribute, classify, normalize_heatmap, select, AttributionMethod, SelectionConfig,
    SelectionMethod,
};

fn main() -> relevance_lens::Result<()> {
    let spec = PlantedSpec::default();
    let model = planted_model(&spec, 2);
    let input = model.preprocess(&planted_image(&spec, true, 2))?;
    let (target, _) = classify(&model, &input)?;
    let heatmap = normalize_heatmap(&attribute(&model, &input, target, AttributionMethod::Gradient)?);

    for method in SelectionMethod::ALL {
        let config = SelectionConfig::new(method).with_clusters(5);
        let sel = select(&heatmap, &config)?;
        println!("{} ({} clusters)", method.name(), sel.len());
        for c in &sel.clusters {
            println!("  rank {:>2}  mean {:.3}  pixels {:>3}", c.rank, c.mean_relevance, c.pixels.len());
        }
    }
    Ok(())
}
