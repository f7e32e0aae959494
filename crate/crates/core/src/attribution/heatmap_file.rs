//! Heatmaps on disk: a 16-bit binary PGM of the normalized map plus a JSON
//! sidecar (`<file>.json`) holding provenance and the normalization range.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize_heatmap, AttributionMethod, Heatmap, ValueRange};
use crate::error::{Error, Result};

const MAXVAL: u32 = 65535;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub image_id: String,
    pub method: String,
    pub epsilon: Option<f64>,
    pub target_class: usize,
    pub width: usize,
    pub height: usize,
    /// Raw value mapped to 0.
    pub min: f64,
    /// Raw value mapped to 1.
    pub max: f64,
}

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    let mut name = pgm.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub(crate) fn encode_pgm16(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{MAXVAL}\n").into_bytes();
    out.reserve(values.len() * 2);
    for &v in values {
        let q = (v.clamp(0.0, 1.0) * MAXVAL as f64).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Decodes a binary (`P5`) PGM into `(width, height, maxval, samples)`.
pub(crate) fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, u32, Vec<u32>)> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("truncated PGM header"));
        }
        fields.push(&bytes[start..pos]);
    }
    if fields[0] != b"P5" {
        return Err(Error::format("not a binary PGM (expected P5)"));
    }
    let num = |f: &[u8], what: &str| -> Result<u32> {
        std::str::from_utf8(f)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(format!("bad PGM {what}")))
    };
    let width = num(fields[1], "width")? as usize;
    let height = num(fields[2], "height")? as usize;
    let maxval = num(fields[3], "maxval")?;
    if width == 0 || height == 0 || maxval == 0 || maxval > MAXVAL {
        return Err(Error::format("PGM dimensions or maxval out of range"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * sample_bytes;
    let raster = bytes
        .get(pos..)
        .filter(|r| r.len() == expected)
        .ok_or_else(|| Error::format(format!("PGM raster must hold exactly {expected} bytes")))?;
    let samples: Vec<u32> = if sample_bytes == 2 {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
            .collect()
    } else {
        raster.iter().map(|&b| b as u32).collect()
    };
    if samples.iter().any(|&s| s > maxval) {
        return Err(Error::format("PGM sample exceeds maxval"));
    }
    Ok((width, height, maxval, samples))
}

/// Writes `heatmap` (normalized first if needed) and its sidecar.
pub fn write_heatmap(heatmap: &Heatmap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let normalized;
    let h = if heatmap.is_normalized() {
        heatmap
    } else {
        normalized = normalize_heatmap(heatmap);
        &normalized
    };
    let range = h.normalized_from().expect("normalized");
    let sidecar = HeatmapSidecar {
        image_id: h.image_id.clone(),
        method: h.method.name().to_string(),
        epsilon: h.method.epsilon(),
        target_class: h.target_class,
        width: h.width(),
        height: h.height(),
        min: range.min,
        max: range.max,
    };
    fs::write(path, encode_pgm16(h.width(), h.height(), h.values()))
        .map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

/// Reads a heatmap written by [`write_heatmap`]. The returned map holds the
/// normalized values `q / maxval`.
pub fn read_heatmap(path: impl AsRef<Path>) -> Result<Heatmap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (width, height, maxval, samples) = decode_pgm(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: HeatmapSidecar = serde_json::from_str(&text)?;
    if (sidecar.width, sidecar.height) != (width, height) {
        return Err(Error::format(format!(
            "sidecar dimensions {}x{} disagree with PGM {width}x{height}",
            sidecar.width, sidecar.height
        )));
    }
    let method = AttributionMethod::parse_with_epsilon(
        &sidecar.method,
        sidecar.epsilon.unwrap_or(super::DEFAULT_EPSILON),
    )?;
    let values = samples
        .into_iter()
        .map(|q| q as f64 / maxval as f64)
        .collect();
    Ok(Heatmap::new(width, height, values, method, sidecar.target_class)?
        .with_image_id(sidecar.image_id)
        .with_range(ValueRange {
            min: sidecar.min,
            max: sidecar.max,
        }))
}
