//! Erasure curves on a synthetic two-class dataset: for each attribution
//! method, clusters are occluded in rank order and the dataset is
//! re-classified after each step.
//!
//!     cargo run --example erasure_curve

use relevance_lens::evaluation::DEFAULT_STEPS;
use relevance_lens::synthetic::{planted_dataset, planted_model, PlantedSpec};
use relevance_lens::{
    erasure_curve, AttributionMethod, OcclusionMode, SelectionConfig, SelectionMethod,
};

fn main() -> relevance_lens::Result<()> {
    let spec = PlantedSpec::default();
    let model = planted_model(&spec, 4);
    let dataset = planted_dataset(&spec, 20, 4);
    let config = SelectionConfig::new(SelectionMethod::MeanShift);

    for method in [
        AttributionMethod::Gradient,
        AttributionMethod::LrpZ,
        AttributionMethod::lrp_epsilon(0.01)?,
    ] {
        let curve = erasure_curve(&model, &dataset, method, &config, DEFAULT_STEPS, OcclusionMode::Mask)?;
        println!("{} + {}", curve.method, curve.selection);
        println!("  step  accuracy  auc     mean target logit");
        for s in &curve.steps {
            let auc = s.roc_auc.map(|a| format!("{a:.3}")).unwrap_or_else(|| "-".into());
            println!("  {:>4}  {:>8.3}  {:<6}  {:.3}", s.step, s.accuracy, auc, s.mean_target_logit);
        }
    }
    Ok(())
}
