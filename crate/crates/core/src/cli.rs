//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage, input or validation errors, 2 for
//! numerical failures. Diagnostics go to standard error; results go to the
//! declared output files or standard output.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::attribution::{attribute, read_heatmap, write_heatmap, AttributionMethod, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::evaluation::{
    erasure_curve, occlude, selection_agreement, write_text, ErasureCurve, LabeledImage,
    OcclusionMode, DEFAULT_STEPS,
};
use crate::io::{
    fit_to_model, image_to_raw, load_image, read_manifest, read_mask, save_png,
};
use crate::nn::{classify, load_model, Layer, Model};
use crate::render::{overlay, render_heatmap, render_occlusion_series, Palette};
use crate::selection::{
    read_selection, select, write_selection, Bandwidth, SelectionConfig, SelectionMethod,
    DEFAULT_CLUSTERS,
};

pub const THREADS_ENV: &str = "RELEVANCE_LENS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "relevance-lens", version, about = "Attribution heatmaps and occlusion-based faithfulness evaluation for CNN classifiers")]
struct Cli {
    /// Model file (RLNS format).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Worker threads: a count or "auto". Falls back to $RELEVANCE_LENS_THREADS.
    #[arg(long, global = true)]
    threads: Option<String>,
    /// Seed for k-means initialization.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the layer table, parameter count and class labels of a model.
    ModelInfo {
        /// Model file; defaults to --model.
        path: Option<PathBuf>,
    },
    /// Classify one image.
    Classify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        resize: bool,
    },
    /// Compute a heatmap and write it as a 16-bit PGM with a JSON sidecar.
    Attribute {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_parser = AttributionMethod::NAMES)]
        method: String,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// "argmax" or a class index.
        #[arg(long, default_value = "argmax")]
        target: String,
        #[arg(long)]
        resize: bool,
        /// Also write a rendered PNG of the heatmap.
        #[arg(long)]
        png: Option<PathBuf>,
        #[arg(long, default_value = "diverging", value_parser = ["grayscale", "diverging"])]
        palette: String,
    },
    /// Cluster heatmap pixels into ranked groups.
    Select {
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long, value_parser = ["bins", "kmeans", "meanshift"])]
        method: String,
        /// Bin count, k, or number of mean-shift clusters kept.
        #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value = "auto")]
        bandwidth: String,
    },
    /// Occlude clusters cumulatively and write one frame per step.
    Erase {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value = "mask", value_parser = ["mask", "square"])]
        mode: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        resize: bool,
    },
    /// Erasure curves over a dataset manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// gradient, lrp-z, lrp-epsilon or all.
        #[arg(long, default_value = "all")]
        method: String,
        /// bins, kmeans, meanshift or all.
        #[arg(long, default_value = "all")]
        select: String,
        #[arg(long, default_value_t = DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value = "auto")]
        bandwidth: String,
        #[arg(long, default_value = "mask", value_parser = ["mask", "square"])]
        mode: String,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        resize: bool,
    },
    /// Compare a selection's cumulative clusters with an annotation mask.
    Agreement {
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Number of cumulative steps; defaults to every cluster.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Blend a heatmap over an image.
    Overlay {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long)]
        resize: bool,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Numerical { .. }) {
                eprintln!("hint: retry with --method lrp-epsilon");
            }
            e.exit_code()
        }
    }
}

fn resolve_threads(flag: Option<&str>) -> Result<usize> {
    let env = std::env::var(THREADS_ENV).ok();
    let Some(value) = flag.or(env.as_deref()) else {
        return Ok(0);
    };
    if value == "auto" {
        return Ok(0);
    }
    value
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::input(format!("--threads must be a positive count or \"auto\", got {value:?}")))
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::input(format!("{flag} is required")))
}

fn load_raw(model: &Model, path: &Path, resize: bool) -> Result<LabeledImageParts> {
    let img = fit_to_model(load_image(path)?, model, resize)?;
    let raw = image_to_raw(&img, model.channels())?;
    Ok(LabeledImageParts { image: img, raw })
}

struct LabeledImageParts {
    image: image::RgbImage,
    raw: crate::tensor::Tensor,
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(cli: Cli) -> Result<()> {
    let threads = resolve_threads(cli.threads.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::input(format!("cannot start worker pool: {e}")))?;

    match cli.command {
        Command::ModelInfo { path } => {
            let path = match path {
                Some(p) => p,
                None => require(&cli.model, "--model")?.to_path_buf(),
            };
            let model = load_model(&path)?;
            print!("{}", describe_model(&model));
            Ok(())
        }
        Command::Classify { image, resize } => {
            let model = load_model(require(&cli.model, "--model")?)?;
            let parts = load_raw(&model, &image, resize)?;
            let (predicted, logits) = classify(&model, &model.preprocess(&parts.raw)?)?;
            #[derive(Serialize)]
            struct Out<'a> {
                image: String,
                predicted_class: usize,
                label: &'a str,
                logits: &'a [f64],
            }
            let out = Out {
                image: image_id(&image),
                predicted_class: predicted,
                label: &model.class_labels()[predicted],
                logits: logits.data(),
            };
            emit(cli.out.as_deref(), &serde_json::to_string_pretty(&out)?)
        }
        Command::Attribute {
            image,
            method,
            epsilon,
            target,
            resize,
            png,
            palette,
        } => {
            let model = load_model(require(&cli.model, "--model")?)?;
            let out = require(&cli.out, "--out")?;
            let method = AttributionMethod::parse_with_epsilon(&method, epsilon)?;
            let parts = load_raw(&model, &image, resize)?;
            let input = model.preprocess(&parts.raw)?;
            let target = if target == "argmax" {
                classify(&model, &input)?.0
            } else {
                target
                    .parse()
                    .map_err(|_| Error::input(format!("--target must be \"argmax\" or a class index, got {target:?}")))?
            };
            let heatmap = attribute(&model, &input, target, method)?.with_image_id(image_id(&image));
            write_heatmap(&heatmap, out)?;
            if let Some(png) = png {
                save_png(&render_heatmap(&heatmap, palette.parse::<Palette>()?), png)?;
            }
            Ok(())
        }
        Command::Select {
            heatmap,
            method,
            clusters,
            bandwidth,
        } => {
            let out = require(&cli.out, "--out")?;
            let heatmap = read_heatmap(&heatmap)?;
            let config = SelectionConfig {
                method: method.parse()?,
                kmeans_seed: cli.seed,
                meanshift_bandwidth: bandwidth.parse()?,
                ..SelectionConfig::default()
            }
            .with_clusters(clusters);
            write_selection(&select(&heatmap, &config)?, out)
        }
        Command::Erase {
            image,
            selection,
            steps,
            mode,
            out_dir,
            resize,
        } => {
            let model = load_model(require(&cli.model, "--model")?)?;
            let mode: OcclusionMode = mode.parse()?;
            let selection = read_selection(&selection)?;
            let parts = load_raw(&model, &image, resize)?;
            let (target, clean) = classify(&model, &model.preprocess(&parts.raw)?)?;
            create_dir(&out_dir)?;
            let frames = render_occlusion_series(&parts.image, &selection, steps, mode)?;
            let mut csv = String::from("step,clusters_erased,target_logit,predicted_class\n");
            csv.push_str(&format!("0,0,{},{}\n", clean.data()[target], target));
            for (t, frame) in frames.iter().enumerate() {
                let step = t + 1;
                save_png(frame, out_dir.join(format!("frame_{step:02}.png")))?;
                let occluded = occlude(&parts.raw, &selection.cumulative_pixels(step), mode)?;
                let (predicted, logits) = classify(&model, &model.preprocess(&occluded)?)?;
                csv.push_str(&format!(
                    "{step},{step},{},{predicted}\n",
                    logits.data()[target]
                ));
            }
            write_text(&out_dir.join("erasure.csv"), &csv)
        }
        Command::Evaluate {
            manifest,
            method,
            select: selection,
            steps,
            epsilon,
            clusters,
            bandwidth,
            mode,
            out_dir,
            resize,
        } => {
            let model = load_model(require(&cli.model, "--model")?)?;
            let methods: Vec<AttributionMethod> = if method == "all" {
                AttributionMethod::NAMES
                    .iter()
                    .map(|m| AttributionMethod::parse_with_epsilon(m, epsilon))
                    .collect::<Result<_>>()?
            } else {
                vec![AttributionMethod::parse_with_epsilon(&method, epsilon)?]
            };
            let selections: Vec<SelectionMethod> = if selection == "all" {
                SelectionMethod::ALL.to_vec()
            } else {
                vec![selection.parse()?]
            };
            let bandwidth: Bandwidth = bandwidth.parse()?;
            let mode: OcclusionMode = mode.parse()?;

            let manifest = read_manifest(&manifest)?;
            manifest.check_labels(model.num_classes())?;
            let dataset = manifest
                .rows
                .iter()
                .map(|row| {
                    let parts = load_raw(&model, &manifest.resolve(&row.path), resize)?;
                    Ok(LabeledImage {
                        id: row.image_id.clone(),
                        raw: parts.raw,
                        label: row.label,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let mut curves = Vec::new();
            for &m in &methods {
                for &s in &selections {
                    let config = SelectionConfig {
                        method: s,
                        kmeans_seed: cli.seed,
                        meanshift_bandwidth: bandwidth,
                        ..SelectionConfig::default()
                    }
                    .with_clusters(clusters);
                    let curve =
                        pool.install(|| erasure_curve(&model, &dataset, m, &config, steps, mode))?;
                    curves.push(curve);
                }
            }

            match (&out_dir, &cli.out) {
                (Some(dir), _) => {
                    create_dir(dir)?;
                    for c in &curves {
                        c.write_csv(dir.join(format!("curve_{}_{}.csv", c.method, c.selection)))?;
                        c.write_detail_csv(dir.join(format!("detail_{}_{}.csv", c.method, c.selection)))?;
                    }
                    write_summary(dir, &curves)?;
                    if let Some(out) = &cli.out {
                        if let [only] = curves.as_slice() {
                            only.write_csv(out)?;
                        }
                    }
                    Ok(())
                }
                (None, Some(out)) => match curves.as_slice() {
                    [only] => only.write_csv(out),
                    _ => Err(Error::input(
                        "--out takes a single method/selection pair; use --out-dir for grids",
                    )),
                },
                (None, None) => Err(Error::input("--out-dir or --out is required")),
            }
        }
        Command::Agreement {
            selection,
            mask,
            steps,
        } => {
            let selection = read_selection(&selection)?;
            let mask = read_mask(&mask)?;
            let report = selection_agreement(&selection, &mask, steps)?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            match &cli.out {
                Some(out) => write_text(out, &json),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
        Command::Overlay {
            image,
            heatmap,
            alpha,
            resize,
        } => {
            let out = require(&cli.out, "--out")?;
            let heatmap = read_heatmap(&heatmap)?;
            let mut base = load_image(&image)?;
            if base.dimensions() != (heatmap.width() as u32, heatmap.height() as u32) {
                if !resize {
                    return Err(Error::input(format!(
                        "image is {}x{} but the heatmap is {}x{}; pass --resize to resample",
                        base.width(),
                        base.height(),
                        heatmap.width(),
                        heatmap.height()
                    )));
                }
                base = image::imageops::resize(
                    &base,
                    heatmap.width() as u32,
                    heatmap.height() as u32,
                    image::imageops::FilterType::Triangle,
                );
            }
            save_png(&overlay(&base, &heatmap, alpha)?, out)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, &format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Human-readable layer table.
pub fn describe_model(model: &Model) -> String {
    let [c, h, w] = model.input_shape();
    let pre = model.preprocessing();
    let mut s = format!("input: {c}x{h}x{w} (channels x height x width)\n");
    s.push_str(&format!(
        "preprocessing: mean {:?} scale {:?}\n",
        pre.mean, pre.scale
    ));
    s.push_str("classes:");
    for (i, l) in model.class_labels().iter().enumerate() {
        s.push_str(&format!(" {i}={l}"));
    }
    s.push('\n');
    s.push_str(&format!("{:<5} {:<24} {:<16} {:>10}\n", "idx", "layer", "output", "params"));
    for (i, layer) in model.layers().iter().enumerate() {
        let detail = match layer {
            Layer::Conv2d(cv) => format!(
                "{} {}x{}/{} {:?}",
                layer.kind(),
                cv.kernel_h,
                cv.kernel_w,
                cv.stride,
                cv.padding
            )
            .to_lowercase(),
            Layer::MaxPool2d(p) => format!("{} {}x{}/{}", layer.kind(), p.window_h, p.window_w, p.stride),
            _ => layer.kind().to_string(),
        };
        let shape = model
            .shape_at(i + 1)
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        s.push_str(&format!(
            "{:<5} {:<24} {:<16} {:>10}\n",
            i,
            detail,
            shape,
            layer.param_count()
        ));
    }
    s.push_str(&format!("total parameters: {}\n", model.param_count()));
    s
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    method: &'a str,
    selection: &'a str,
    steps: usize,
    mean_auc: Option<f64>,
    final_auc: Option<f64>,
    baseline_accuracy: f64,
    final_accuracy: f64,
}

/// One CSV row per selection method, one column per attribution method,
/// each cell the mean ROC-AUC over steps `1..=T`; plus a JSON with details.
fn write_summary(dir: &Path, curves: &[ErasureCurve]) -> Result<()> {
    let mut methods: Vec<&str> = Vec::new();
    let mut selections: Vec<&str> = Vec::new();
    for c in curves {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
        if !selections.contains(&c.selection.as_str()) {
            selections.push(&c.selection);
        }
    }
    let mut csv = format!("selection,{}\n", methods.join(","));
    for s in &selections {
        csv.push_str(s);
        for m in &methods {
            let cell = curves
                .iter()
                .find(|c| c.method == *m && c.selection == *s)
                .and_then(ErasureCurve::mean_auc)
                .map(|a| a.to_string())
                .unwrap_or_default();
            csv.push(',');
            csv.push_str(&cell);
        }
        csv.push('\n');
    }
    write_text(&dir.join("summary.csv"), &csv)?;

    let rows: Vec<SummaryRow> = curves
        .iter()
        .map(|c| SummaryRow {
            method: &c.method,
            selection: &c.selection,
            steps: c.steps.len() - 1,
            mean_auc: c.mean_auc(),
            final_auc: c.steps.last().and_then(|s| s.roc_auc),
            baseline_accuracy: c.steps[0].accuracy,
            final_accuracy: c.steps.last().unwrap().accuracy,
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&rows)?;
    json.push('\n');
    write_text(&dir.join("summary.json"), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_flag_parsing() {
        assert_eq!(resolve_threads(Some("4")).unwrap(), 4);
        assert_eq!(resolve_threads(Some("auto")).unwrap(), 0);
        assert!(resolve_threads(Some("0")).is_err());
        assert!(resolve_threads(Some("many")).is_err());
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(run(["relevance-lens", "frobnicate"]), 1);
        assert_eq!(run(["relevance-lens", "model-info", "--bogus"]), 1);
    }

    #[test]
    fn missing_model_file_exits_one() {
        assert_eq!(run(["relevance-lens", "model-info", "/nonexistent/model.rlns"]), 1);
    }
}
