//! Heatmap colorings, overlays, and occlusion snapshots.

use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};

use crate::attribution::Heatmap;
use crate::error::{Error, Result};
use crate::evaluation::{occlusion_targets, OcclusionMode};
use crate::selection::{ensure_normalized, ClusterSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Palette {
    Grayscale,
    #[default]
    Diverging,
}

impl FromStr for Palette {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" => Ok(Palette::Grayscale),
            "diverging" => Ok(Palette::Diverging),
            other => Err(Error::input(format!("unknown palette {other:?}"))),
        }
    }
}

impl fmt::Display for Palette {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Palette::Grayscale => "grayscale",
            Palette::Diverging => "diverging",
        })
    }
}

/// Round half up to a byte.
fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Entry `i` of the 256-entry diverging table, `t = i / 255`:
/// blue `(0, 0, 255)` at `t = 0` rising linearly to white at `t = 0.5`, then
/// falling to red `(255, 0, 0)` at `t = 1`. Channels are rounded half up.
pub fn diverging_entry(i: u8) -> [u8; 3] {
    let t = i as f64 / 255.0;
    if t <= 0.5 {
        let up = quantize(510.0 * t);
        [up, up, 255]
    } else {
        let down = quantize(510.0 * (1.0 - t));
        [255, down, down]
    }
}

pub fn diverging_table() -> [[u8; 3]; 256] {
    std::array::from_fn(|i| diverging_entry(i as u8))
}

/// Color for a normalized value.
pub fn palette_color(palette: Palette, v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    match palette {
        Palette::Grayscale => [quantize(255.0 * v); 3],
        Palette::Diverging => diverging_entry(quantize(255.0 * v)),
    }
}

pub fn render_heatmap(h: &Heatmap, palette: Palette) -> RgbImage {
    let h = ensure_normalized(h);
    let w = h.width();
    RgbImage::from_fn(w as u32, h.height() as u32, |x, y| {
        Rgb(palette_color(palette, h.values()[y as usize * w + x as usize]))
    })
}

/// Blends the diverging palette over `base`, weighting each pixel by
/// `alpha · v`: `out = round((1 - αv)·base + αv·palette(v))`.
pub fn overlay(base: &RgbImage, h: &Heatmap, alpha: f64) -> Result<RgbImage> {
    if base.width() as usize != h.width() || base.height() as usize != h.height() {
        return Err(Error::input(format!(
            "image is {}x{} but the heatmap is {}x{}",
            base.width(),
            base.height(),
            h.width(),
            h.height()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let h = ensure_normalized(h);
    let w = h.width();
    Ok(RgbImage::from_fn(base.width(), base.height(), |x, y| {
        let v = h.values()[y as usize * w + x as usize];
        let a = alpha * v;
        let color = palette_color(Palette::Diverging, v);
        let px = base.get_pixel(x, y);
        Rgb(std::array::from_fn(|c| {
            quantize((1.0 - a) * px[c] as f64 + a * color[c] as f64)
        }))
    }))
}

/// Frames `1..=steps`, frame `t` showing clusters `1..=t` blacked out. Steps
/// beyond the last cluster repeat the fully occluded frame.
pub fn render_occlusion_series(
    image: &RgbImage,
    selection: &ClusterSelection,
    steps: usize,
    mode: OcclusionMode,
) -> Result<Vec<RgbImage>> {
    if image.width() as usize != selection.width || image.height() as usize != selection.height {
        return Err(Error::input(format!(
            "image is {}x{} but the selection covers {}x{}",
            image.width(),
            image.height(),
            selection.width,
            selection.height
        )));
    }
    let w = selection.width;
    (1..=steps)
        .map(|t| {
            let targets = occlusion_targets(
                selection.width,
                selection.height,
                &selection.cumulative_pixels(t),
                mode,
            )?;
            let mut frame = image.clone();
            for p in targets {
                frame.put_pixel((p % w) as u32, (p / w) as u32, Rgb([0, 0, 0]));
            }
            Ok(frame)
        })
        .collect()
}
