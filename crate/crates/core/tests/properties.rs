mod common;

use common::{random_input, random_model, rng, weighted_outputs, Draw};
use proptest::prelude::*;
use rand::Rng;
use relevance_lens::evaluation::{occlusion_targets, AgreementStep};
use relevance_lens::io::{image_to_raw, raw_to_image};
use relevance_lens::render::{overlay, render_heatmap, render_occlusion_series, Palette};
use relevance_lens::{
    agreement, attribute, classify, forward, gradient_saliency, lrp, normalize_heatmap, occlude,
    roc_auc, select, select_kmeans, select_meanshift, AnnotationMask, AttributionMethod, Bandwidth,
    ClusterSelection, Heatmap, OcclusionMode, SelectionConfig, SelectionMethod, Tensor,
};

fn heatmap_strategy() -> impl Strategy<Value = Heatmap> {
    (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
        prop::collection::vec(-5.0f64..5.0, w * h)
            .prop_map(move |v| Heatmap::new(w, h, v, AttributionMethod::Gradient, 0).unwrap())
    })
}

fn selection_method() -> impl Strategy<Value = SelectionMethod> {
    prop::sample::select(SelectionMethod::ALL.to_vec())
}

fn check_partition(sel: &ClusterSelection, n: usize, full: bool) -> Result<(), TestCaseError> {
    let mut seen = vec![false; n];
    for c in &sel.clusters {
        prop_assert!(!c.pixels.is_empty());
        prop_assert!(c.pixels.windows(2).all(|w| w[0] < w[1]));
        for &p in &c.pixels {
            prop_assert!(p < n);
            prop_assert!(!seen[p], "pixel {} in two clusters", p);
            seen[p] = true;
        }
    }
    if full {
        prop_assert!(seen.iter().all(|&s| s));
    }
    for (i, pair) in sel.clusters.windows(2).enumerate() {
        prop_assert!(pair[0].mean_relevance >= pair[1].mean_relevance, "rank {} out of order", i + 1);
    }
    for (i, c) in sel.clusters.iter().enumerate() {
        prop_assert_eq!(c.rank, i + 1);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_shapes_chain(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, Draw::SIGNED);
        let input = random_input(&mut r, &model, -1.0);
        let (logits, trace) = forward(&model, &input).unwrap();
        prop_assert_eq!(trace.len(), model.layers().len());
        for i in 0..model.layers().len() {
            let shape = trace.layer_output(i).shape();
            let expected = model.shape_at(i + 1);
            prop_assert_eq!(shape, expected);
        }
        prop_assert_eq!(logits.len(), model.num_classes());
    }

    #[test]
    fn forward_and_attribution_are_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, Draw::SIGNED);
        let input = random_input(&mut r, &model, -1.0);
        let target = r.random_range(0..model.num_classes());
        let a = forward(&model, &input).unwrap().0;
        let b = forward(&model, &input).unwrap().0;
        prop_assert_eq!(a.data(), b.data());
        for method in [AttributionMethod::Gradient, AttributionMethod::LrpEpsilon { epsilon: 0.01 }] {
            let x = attribute(&model, &input, target, method).unwrap();
            let y = attribute(&model, &input, target, method).unwrap();
            prop_assert_eq!(x.values(), y.values());
        }
    }

    /// For a bias-free network with ReLU/maxpool the logit is positively
    /// homogeneous: scaling the input by a > 0 scales the logit by a.
    #[test]
    fn bias_free_networks_are_homogeneous(seed in any::<u64>(), a in 0.1f64..10.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r, Draw::BIAS_FREE);
        let input = random_input(&mut r, &model, -1.0);
        let scaled = Tensor::new(input.shape().to_vec(), input.data().iter().map(|v| v * a).collect()).unwrap();
        let l1 = forward(&model, &input).unwrap().0;
        let l2 = forward(&model, &scaled).unwrap().0;
        for (x, y) in l1.data().iter().zip(l2.data()) {
            prop_assert!((x * a - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn lrp_z_conserves_relevance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, Draw::BIAS_FREE);
        let input = random_input(&mut r, &model, -1.0);
        prop_assume!(weighted_outputs(&model, &input).iter().all(|z| z.abs() >= 1e-6));
        let (target, logits) = classify(&model, &input).unwrap();
        let h = lrp(&model, &input, target, AttributionMethod::LrpZ).unwrap();
        let total: f64 = h.values().iter().sum();
        let logit = logits.data()[target];
        prop_assert!((total - logit).abs() <= 1e-8 * logit.abs().max(1.0));
    }

    /// With a huge epsilon the stabilizer absorbs nearly all relevance.
    #[test]
    fn epsilon_absorbs_relevance(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_model(&mut r, Draw::BIAS_FREE);
        let input = random_input(&mut r, &model, -1.0);
        let (target, _) = classify(&model, &input).unwrap();
        let small = lrp(&model, &input, target, AttributionMethod::LrpEpsilon { epsilon: 1e-6 }).unwrap();
        let large = lrp(&model, &input, target, AttributionMethod::LrpEpsilon { epsilon: 1e6 }).unwrap();
        let mass = |h: &Heatmap| h.values().iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!(mass(&large) <= mass(&small) + 1e-12);
    }

    /// Gradient saliency of a bias-free network is invariant to input scale;
    /// LRP relevance scales linearly with it.
    #[test]
    fn attribution_scale_covariance(seed in any::<u64>(), a in 0.5f64..4.0) {
        let mut r = rng(seed);
        let model = random_model(&mut r, Draw::BIAS_FREE);
        let input = random_input(&mut r, &model, -1.0);
        prop_assume!(weighted_outputs(&model, &input).iter().all(|z| z.abs() >= 1e-6));
        let scaled = Tensor::new(input.shape().to_vec(), input.data().iter().map(|v| v * a).collect()).unwrap();
        let (target, _) = classify(&model, &input).unwrap();
        let g1 = gradient_saliency(&model, &input, target).unwrap();
        let g2 = gradient_saliency(&model, &scaled, target).unwrap();
        for (x, y) in g1.values().iter().zip(g2.values()) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        let r1 = lrp(&model, &input, target, AttributionMethod::LrpZ).unwrap();
        let r2 = lrp(&model, &scaled, target, AttributionMethod::LrpZ).unwrap();
        for (x, y) in r1.values().iter().zip(r2.values()) {
            prop_assert!((x * a - y).abs() <= 1e-8 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn normalization_is_bounded_and_idempotent(h in heatmap_strategy()) {
        let n = normalize_heatmap(&h);
        prop_assert!(n.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let twice = normalize_heatmap(&n);
        for (a, b) in n.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let range = n.normalized_from().unwrap();
        let (lo, hi) = h.min_max();
        prop_assert_eq!((range.min, range.max), (lo, hi));
    }

    #[test]
    fn selections_partition_and_rank(h in heatmap_strategy(), method in selection_method(), n in 1usize..8, seed in any::<u64>()) {
        let config = SelectionConfig { kmeans_seed: seed, ..SelectionConfig::new(method) }.with_clusters(n);
        let sel = select(&h, &config).unwrap();
        sel.validate().unwrap();
        check_partition(&sel, h.len(), method != SelectionMethod::MeanShift)?;
        prop_assert!(sel.len() <= n);
    }

    #[test]
    fn kmeans_is_seed_deterministic(h in heatmap_strategy(), k in 1usize..6, seed in any::<u64>()) {
        let a = select_kmeans(&h, k, seed).unwrap();
        let b = select_kmeans(&h, k, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Mean shift never reports more modes than distinct values, nor more
    /// than requested.
    #[test]
    fn meanshift_mode_count_is_bounded(h in heatmap_strategy(), top in 1usize..12) {
        let sel = select_meanshift(&h, Bandwidth::Auto, top).unwrap();
        let mut distinct = h.values().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assert!(!sel.is_empty());
        prop_assert!(sel.len() <= top.min(distinct.len()));
    }

    #[test]
    fn auc_is_rank_invariant(scores in prop::collection::vec(-10.0f64..10.0, 2..40), labels in prop::collection::vec(any::<bool>(), 40)) {
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = roc_auc(&scores, labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let warped: Vec<f64> = scores.iter().map(|s| (s / 3.0).exp() + 7.0).collect();
        prop_assert_eq!(roc_auc(&warped, labels).unwrap(), base);
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert!((roc_auc(&negated, labels).unwrap() - (1.0 - base)).abs() < 1e-12);
    }

    #[test]
    fn occlusion_coverage_grows(h in heatmap_strategy(), square in any::<bool>()) {
        let mode = if square { OcclusionMode::Square } else { OcclusionMode::Mask };
        let sel = select(&h, &SelectionConfig::new(SelectionMethod::Bins).with_clusters(5)).unwrap();
        let mut previous: Vec<usize> = Vec::new();
        for t in 0..=sel.len() {
            let targets = occlusion_targets(h.width(), h.height(), &sel.cumulative_pixels(t), mode).unwrap();
            prop_assert!(previous.iter().all(|p| targets.contains(p)));
            previous = targets;
        }
        let raw = Tensor::filled(vec![2, h.height(), h.width()], 0.5);
        let occluded = occlude(&raw, &sel.cumulative_pixels(sel.len()), mode).unwrap();
        prop_assert!(occluded.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn agreement_values_are_bounded(levels in prop::collection::vec(0u8..=3, 36), picks in prop::collection::vec(prop::collection::vec(0usize..36, 0..12), 1..5)) {
        let mask = AnnotationMask::new(6, 6, levels).unwrap();
        let mut sets = Vec::new();
        let mut acc: Vec<usize> = Vec::new();
        for p in picks {
            acc.extend(p);
            acc.sort_unstable();
            acc.dedup();
            sets.push(acc.clone());
        }
        let report = agreement(&sets, &mask).unwrap();
        for s in &report.steps {
            let AgreementStep { fraction_unannotated, fraction_blue, fraction_orange, fraction_red, iou_red, iou_red_orange, iou_annotated, weighted_agreement, .. } = *s;
            for v in [fraction_unannotated, fraction_blue, fraction_orange, fraction_red, iou_red, iou_red_orange, iou_annotated, weighted_agreement] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if s.occluded_pixels > 0 {
                prop_assert!((fraction_unannotated + fraction_blue + fraction_orange + fraction_red - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn occlusion_frames_darken(seed in any::<u64>(), square in any::<bool>()) {
        let mut r = rng(seed);
        let (w, h) = (r.random_range(2..12), r.random_range(2..12));
        let raw = Tensor::new(vec![3, h, w], (0..3 * w * h).map(|_| (r.random_range(0..=255u8) as f64) / 255.0).collect()).unwrap();
        let image = raw_to_image(&raw).unwrap();
        prop_assert_eq!(image_to_raw(&image, 3).unwrap(), raw);
        let hm = Heatmap::new(w, h, (0..w * h).map(|_| r.random_range(0.0..1.0)).collect(), AttributionMethod::Gradient, 0).unwrap();
        let sel = select(&hm, &SelectionConfig::new(SelectionMethod::Bins).with_clusters(4)).unwrap();
        let mode = if square { OcclusionMode::Square } else { OcclusionMode::Mask };
        let frames = render_occlusion_series(&image, &sel, sel.len() + 2, mode).unwrap();
        let luminance = |img: &image::RgbImage| img.pixels().map(|p| p.0.iter().map(|&c| c as u64).sum::<u64>()).sum::<u64>();
        let mut last = luminance(&image);
        for f in &frames {
            prop_assert_eq!(f.dimensions(), image.dimensions());
            let l = luminance(f);
            prop_assert!(l <= last);
            last = l;
        }
        prop_assert_eq!(render_heatmap(&hm, Palette::Diverging).dimensions(), image.dimensions());
        prop_assert_eq!(overlay(&image, &hm, 0.4).unwrap().dimensions(), image.dimensions());
    }
}
