//! The `RLNS` model file format.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 0..4         | magic `RLNS`                              |
//! | 4..8         | version, `u32` = 1                        |
//! | 8..12        | header length `H`, `u32`                  |
//! | 12..12+H     | UTF-8 JSON header                         |
//! | 12+H..       | weight blobs as `f32`, in layer order     |
//!
//! Each weighted layer contributes its weights (conv `[out][in][kh][kw]`,
//! dense `[out][in]`) followed by its bias `[out]`. The file must end exactly
//! at the last blob byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::{Conv2d, Dense, Layer, MaxPool2d, Padding};
use crate::nn::model::{Model, Preprocessing};

pub const MAGIC: &[u8; 4] = b"RLNS";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    input_shape: [usize; 3],
    preprocessing: Preprocessing,
    class_labels: Vec<String>,
    layers: Vec<LayerHeader>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerHeader {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: Padding,
        weight_count: usize,
        bias_count: usize,
    },
    Relu,
    Maxpool2d {
        window: [usize; 2],
        stride: usize,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
        weight_count: usize,
        bias_count: usize,
    },
}

struct BlobReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BlobReader<'_> {
    fn take(&mut self, count: usize) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| Error::format("weight blob size overflows"))?;
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("unexpected end of weights"))?;
        let values = self.bytes[self.pos..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        self.pos = end;
        Ok(values)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Parses and validates a model from its serialized bytes.
pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 12 {
        return Err(Error::format("file too short for model preamble"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::format("bad magic, expected \"RLNS\""));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::format(format!("unsupported model version {version}")));
    }
    let header_len = read_u32(bytes, 8) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::format("unexpected end of header"))?;
    let header_text = std::str::from_utf8(&bytes[12..header_end])
        .map_err(|e| Error::format(format!("header is not UTF-8: {e}")))?;
    let header: Header = serde_json::from_str(header_text)
        .map_err(|e| Error::format(format!("malformed header: {e}")))?;

    let mut blobs = BlobReader {
        bytes,
        pos: header_end,
    };
    let mut layers = Vec::with_capacity(header.layers.len());
    for lh in header.layers {
        let layer = match lh {
            LayerHeader::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                weight_count,
                bias_count,
            } => Layer::Conv2d(Conv2d {
                in_channels,
                out_channels,
                kernel_h: kernel[0],
                kernel_w: kernel[1],
                stride,
                padding,
                weights: blobs.take(weight_count)?,
                bias: blobs.take(bias_count)?,
            }),
            LayerHeader::Relu => Layer::Relu,
            LayerHeader::Maxpool2d { window, stride } => Layer::MaxPool2d(MaxPool2d {
                window_h: window[0],
                window_w: window[1],
                stride,
            }),
            LayerHeader::Flatten => Layer::Flatten,
            LayerHeader::Dense {
                in_features,
                out_features,
                weight_count,
                bias_count,
            } => Layer::Dense(Dense {
                in_features,
                out_features,
                weights: blobs.take(weight_count)?,
                bias: blobs.take(bias_count)?,
            }),
        };
        layers.push(layer);
    }
    if blobs.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after the last weight blob",
            bytes.len() - blobs.pos
        )));
    }

    Model::new(
        header.input_shape,
        header.preprocessing,
        header.class_labels,
        layers,
    )
}

/// Serializes a model. Weights are stored as `f32`, so values that are not
/// exactly representable in single precision are rounded.
pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut blob = Vec::new();
    let mut push = |values: &[f64]| {
        for &v in values {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    let layers = model
        .layers()
        .iter()
        .map(|layer| match layer {
            Layer::Conv2d(c) => {
                push(&c.weights);
                push(&c.bias);
                LayerHeader::Conv2d {
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    kernel: [c.kernel_h, c.kernel_w],
                    stride: c.stride,
                    padding: c.padding,
                    weight_count: c.weights.len(),
                    bias_count: c.bias.len(),
                }
            }
            Layer::Relu => LayerHeader::Relu,
            Layer::MaxPool2d(p) => LayerHeader::Maxpool2d {
                window: [p.window_h, p.window_w],
                stride: p.stride,
            },
            Layer::Flatten => LayerHeader::Flatten,
            Layer::Dense(d) => {
                push(&d.weights);
                push(&d.bias);
                LayerHeader::Dense {
                    in_features: d.in_features,
                    out_features: d.out_features,
                    weight_count: d.weights.len(),
                    bias_count: d.bias.len(),
                }
            }
        })
        .collect();
    let header = Header {
        input_shape: model.input_shape(),
        preprocessing: model.preprocessing().clone(),
        class_labels: model.class_labels().to_vec(),
        layers,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(12 + header.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blob);
    out
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}
