//! Image, dataset-manifest, and annotation-mask input/output.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{DynamicImage, GrayImage, ImageReader, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::AnnotationMask;
use crate::nn::Model;
use crate::tensor::Tensor;

pub const MAGNIFICATIONS: [u32; 4] = [40, 100, 200, 400];

fn open_image(path: &Path) -> Result<DynamicImage> {
    let image_err = |source| Error::Image {
        path: path.to_path_buf(),
        source,
    };
    ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(image_err)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage> {
    Ok(open_image(path.as_ref())?.to_rgb8())
}

pub fn save_png(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    image.save_with_format(path, image::ImageFormat::Png).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Checks that `image` matches the model's spatial input, resizing
/// bilinearly only when `resize` is set.
pub fn fit_to_model(image: RgbImage, model: &Model, resize: bool) -> Result<RgbImage> {
    let (w, h) = (model.width() as u32, model.height() as u32);
    if image.dimensions() == (w, h) {
        return Ok(image);
    }
    if !resize {
        return Err(Error::input(format!(
            "image is {}x{} but the model expects {w}x{h}; pass --resize to resample",
            image.width(),
            image.height()
        )));
    }
    Ok(image::imageops::resize(&image, w, h, FilterType::Triangle))
}

/// Converts 8-bit pixels to a raw `(C, H, W)` tensor in `[0, 1]`. One-channel
/// tensors use the image's luma.
pub fn image_to_raw(image: &RgbImage, channels: usize) -> Result<Tensor> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let plane = w * h;
    let data = match channels {
        3 => {
            let mut data = vec![0.0; 3 * plane];
            for (i, px) in image.pixels().enumerate() {
                for c in 0..3 {
                    data[c * plane + i] = px[c] as f64 / 255.0;
                }
            }
            data
        }
        1 => DynamicImage::ImageRgb8(image.clone())
            .to_luma8()
            .pixels()
            .map(|p| p[0] as f64 / 255.0)
            .collect(),
        other => {
            return Err(Error::input(format!(
                "images can only feed 1- or 3-channel models, not {other}"
            )))
        }
    };
    Ok(Tensor::from_parts(vec![channels, h, w], data))
}

/// Converts a raw `(C, H, W)` tensor in `[0, 1]` back to 8-bit RGB.
pub fn raw_to_image(raw: &Tensor) -> Result<RgbImage> {
    let [c, h, w] = *raw.shape() else {
        return Err(Error::input("expected a (channels, height, width) tensor"));
    };
    if c != 1 && c != 3 {
        return Err(Error::input(format!("cannot render a {c}-channel tensor")));
    }
    let plane = h * w;
    let d = raw.data();
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        if c == 3 {
            image::Rgb([q(d[i]), q(d[plane + i]), q(d[2 * plane + i])])
        } else {
            image::Rgb([q(d[i]); 3])
        }
    }))
}

/// Scales pixels to `[0, 1]` and applies the model's preprocessing.
pub fn to_tensor(image: &RgbImage, model: &Model) -> Result<Tensor> {
    model.preprocess(&image_to_raw(image, model.channels())?)
}

/// Reads an annotation mask: an 8-bit grayscale PNG whose values are all in `{0, 1, 2, 3}`.
pub fn read_mask(path: impl AsRef<Path>) -> Result<AnnotationMask> {
    let path = path.as_ref();
    let img = open_image(path)?;
    let DynamicImage::ImageLuma8(gray) = img else {
        return Err(Error::input(format!(
            "{} is not an 8-bit grayscale PNG",
            path.display()
        )));
    };
    AnnotationMask::new(gray.width() as usize, gray.height() as usize, gray.into_raw())
}

pub fn write_mask(mask: &AnnotationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gray = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.levels().to_vec())
        .expect("mask buffer matches its dimensions");
    gray.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_id: String,
    pub path: PathBuf,
    pub label: usize,
    pub magnification: u32,
    #[serde(default)]
    pub annotation: Option<PathBuf>,
}

/// Rows of a dataset manifest CSV. Relative paths resolve against `base_dir`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut ids = HashSet::new();
        for row in &rows {
            if !ids.insert(row.image_id.as_str()) {
                return Err(Error::input(format!("duplicate image_id {:?}", row.image_id)));
            }
            if !MAGNIFICATIONS.contains(&row.magnification) {
                return Err(Error::input(format!(
                    "image {:?} has magnification {}, expected one of {MAGNIFICATIONS:?}",
                    row.image_id, row.magnification
                )));
            }
        }
        Ok(Self {
            rows,
            base_dir: base_dir.into(),
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Fails if any label is outside `0..classes`.
    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.rows.iter().find(|r| r.label >= classes) {
            Some(r) => Err(Error::input(format!(
                "image {:?} has label {} but the model has {classes} classes",
                r.image_id, r.label
            ))),
            None => Ok(()),
        }
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::input(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let expected = ["image_id", "path", "label", "magnification"];
    if names.len() < 4 || names[..4] != expected || names.len() > 5 || (names.len() == 5 && names[4] != "annotation") {
        return Err(Error::input(format!(
            "manifest header must be image_id,path,label,magnification[,annotation], got {}",
            names.join(",")
        )));
    }
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::new(rows, base)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let with_annotations = manifest.rows.iter().any(|r| r.annotation.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::input(format!("{other:?}")),
    })?;
    let mut header = vec!["image_id", "path", "label", "magnification"];
    if with_annotations {
        header.push("annotation");
    }
    w.write_record(&header)?;
    for r in &manifest.rows {
        let mut rec = vec![
            r.image_id.clone(),
            r.path.display().to_string(),
            r.label.to_string(),
            r.magnification.to_string(),
        ];
        if with_annotations {
            rec.push(
                r.annotation
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            );
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TumorClass {
    Benign,
    Malignant,
}

/// Fields of a BreakHis file name such as `SOB_M_DC-14-16716-40-01011.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreakhisName {
    pub tumor_class: TumorClass,
    /// A, F, PT, TA (benign) or DC, LC, MC, PC (malignant).
    pub tumor_type: String,
    pub year: String,
    pub slide: String,
    pub magnification: u32,
    pub sequence: String,
}

const BENIGN_TYPES: [&str; 4] = ["A", "F", "PT", "TA"];
const MALIGNANT_TYPES: [&str; 4] = ["DC", "LC", "MC", "PC"];

/// Parses `SOB{-|_}{B|M}{-|_}<type>-<year>-<slide>-<magnification>-<seq>`,
/// with or without a file extension.
pub fn parse_breakhis_name(name: &str) -> Result<BreakhisName> {
    let bad = || Error::input(format!("{name:?} is not a BreakHis image name"));
    let stem = Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(bad)?;
    let normalized = stem.replace('_', "-");
    let parts: Vec<&str> = normalized.split('-').collect();
    let [sob, class, kind, year, slide, mag, seq] = parts[..] else {
        return Err(bad());
    };
    if sob != "SOB" {
        return Err(bad());
    }
    let tumor_class = match class {
        "B" if BENIGN_TYPES.contains(&kind) => TumorClass::Benign,
        "M" if MALIGNANT_TYPES.contains(&kind) => TumorClass::Malignant,
        _ => return Err(bad()),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(year) || !digits(seq) || slide.is_empty() || !slide.bytes().all(|b| b.is_ascii_alphanumeric()) {
        return Err(bad());
    }
    let magnification: u32 = mag.parse().map_err(|_| bad())?;
    if !MAGNIFICATIONS.contains(&magnification) {
        return Err(bad());
    }
    Ok(BreakhisName {
        tumor_class,
        tumor_type: kind.to_string(),
        year: year.to_string(),
        slide: slide.to_string(),
        magnification,
        sequence: seq.to_string(),
    })
}

fn collect_pngs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_pngs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Builds a manifest from every BreakHis-named PNG under `dir`. Benign images
/// get the index of the "benign" label (else 0) and malignant ones the index
/// of "malignant" (else 1). Rows are sorted by image id.
pub fn manifest_from_breakhis_dir(dir: impl AsRef<Path>, class_labels: &[String]) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let find = |name: &str, fallback: usize| {
        class_labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name))
            .unwrap_or(fallback)
    };
    let (benign, malignant) = (find("benign", 0), find("malignant", 1));
    let mut files = Vec::new();
    collect_pngs(dir, &mut files)?;
    let mut rows = Vec::new();
    for file in files {
        let name = file.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Ok(parsed) = parse_breakhis_name(name) else {
            continue;
        };
        rows.push(ManifestRow {
            image_id: Path::new(name).file_stem().unwrap().to_string_lossy().into_owned(),
            path: file.strip_prefix(dir).unwrap_or(&file).to_path_buf(),
            label: match parsed.tumor_class {
                TumorClass::Benign => benign,
                TumorClass::Malignant => malignant,
            },
            magnification: parsed.magnification,
            annotation: None,
        });
    }
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    DatasetManifest::new(rows, dir)
}
