//! Layer definitions with forward evaluation and input-gradient propagation.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Zero padding so that `out = ceil(in / stride)`; odd padding puts the
    /// extra row/column at the bottom/right.
    Same,
    /// No padding; windows that would overhang the input are dropped.
    Valid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: Padding,
    /// `[out][in][kh][kw]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub window_h: usize,
    pub window_w: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool2d(MaxPool2d),
    Flatten,
    Dense(Dense),
}

/// Resolved spatial bookkeeping for a windowed layer on a concrete input.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

fn spatial(input: &[usize]) -> Result<(usize, usize, usize), String> {
    match *input {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(format!("expected a (channels, height, width) input, got {input:?}")),
    }
}

fn same_extent(input: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let pad_total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, pad_total / 2)
}

fn valid_extent(input: usize, kernel: usize, stride: usize, what: &str) -> Result<usize, String> {
    if input < kernel {
        return Err(format!("{what} {kernel} exceeds input extent {input}"));
    }
    Ok((input - kernel) / stride + 1)
}

impl Conv2d {
    pub(crate) fn geometry(&self, input: &[usize]) -> Result<Geometry, String> {
        let (c, h, w) = spatial(input)?;
        if c != self.in_channels {
            return Err(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            ));
        }
        let (out_h, out_w, pad_top, pad_left) = match self.padding {
            Padding::Same => {
                let (oh, pt) = same_extent(h, self.kernel_h, self.stride);
                let (ow, pl) = same_extent(w, self.kernel_w, self.stride);
                (oh, ow, pt, pl)
            }
            Padding::Valid => (
                valid_extent(h, self.kernel_h, self.stride, "kernel height")?,
                valid_extent(w, self.kernel_w, self.stride, "kernel width")?,
                0,
                0,
            ),
        };
        Ok(Geometry {
            in_c: c,
            in_h: h,
            in_w: w,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    #[inline]
    fn weight_index(&self, o: usize, c: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_h + ky) * self.kernel_w + kx
    }

    /// Visits every (output index, input index, weight index) triple of the
    /// convolution viewed as a sparse linear map.
    #[inline]
    fn for_each_tap(&self, g: &Geometry, mut f: impl FnMut(usize, usize, usize)) {
        for o in 0..self.out_channels {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let out_idx = (o * g.out_h + oy) * g.out_w + ox;
                    for c in 0..g.in_c {
                        for ky in 0..self.kernel_h {
                            let iy = (oy * self.stride + ky) as isize - g.pad_top as isize;
                            if iy < 0 || iy >= g.in_h as isize {
                                continue;
                            }
                            for kx in 0..self.kernel_w {
                                let ix = (ox * self.stride + kx) as isize - g.pad_left as isize;
                                if ix < 0 || ix >= g.in_w as isize {
                                    continue;
                                }
                                let in_idx = (c * g.in_h + iy as usize) * g.in_w + ix as usize;
                                f(out_idx, in_idx, self.weight_index(o, c, ky, kx));
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x.shape()).expect("shape validated at load");
        let plane = g.out_h * g.out_w;
        let mut out = vec![0.0; self.out_channels * plane];
        for (o, chunk) in out.chunks_mut(plane).enumerate() {
            chunk.fill(self.bias[o]);
        }
        let xd = x.data();
        self.for_each_tap(&g, |oi, ii, wi| out[oi] += self.weights[wi] * xd[ii]);
        Tensor::from_parts(vec![self.out_channels, g.out_h, g.out_w], out)
    }

    /// `Wᵀ·grad`, shaped like the input.
    pub(crate) fn transpose_apply(&self, input_shape: &[usize], grad: &[f64]) -> Tensor {
        let g = self.geometry(input_shape).expect("shape validated at load");
        let mut gx = vec![0.0; g.in_c * g.in_h * g.in_w];
        self.for_each_tap(&g, |oi, ii, wi| gx[ii] += self.weights[wi] * grad[oi]);
        Tensor::from_parts(input_shape.to_vec(), gx)
    }
}

impl MaxPool2d {
    pub(crate) fn geometry(&self, input: &[usize]) -> Result<Geometry, String> {
        let (c, h, w) = spatial(input)?;
        Ok(Geometry {
            in_c: c,
            in_h: h,
            in_w: w,
            out_h: valid_extent(h, self.window_h, self.stride, "pool window height")?,
            out_w: valid_extent(w, self.window_w, self.stride, "pool window width")?,
            pad_top: 0,
            pad_left: 0,
        })
    }

    /// Flat input index of each output's maximum; the first row-major
    /// maximum wins ties.
    pub(crate) fn winners(&self, x: &Tensor) -> Vec<usize> {
        let g = self.geometry(x.shape()).expect("shape validated at load");
        let xd = x.data();
        let mut winners = Vec::with_capacity(g.in_c * g.out_h * g.out_w);
        for c in 0..g.in_c {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let mut best = (c * g.in_h + oy * self.stride) * g.in_w + ox * self.stride;
                    for ky in 0..self.window_h {
                        for kx in 0..self.window_w {
                            let idx = (c * g.in_h + oy * self.stride + ky) * g.in_w
                                + ox * self.stride
                                + kx;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    winners.push(best);
                }
            }
        }
        winners
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let g = self.geometry(x.shape()).expect("shape validated at load");
        let xd = x.data();
        let out = self.winners(x).into_iter().map(|i| xd[i]).collect();
        Tensor::from_parts(vec![g.in_c, g.out_h, g.out_w], out)
    }

    /// Routes each output value to its window's winning input position.
    pub(crate) fn route(&self, x: &Tensor, values: &[f64]) -> Tensor {
        let mut gx = vec![0.0; x.len()];
        for (w, v) in self.winners(x).into_iter().zip(values) {
            gx[w] += v;
        }
        Tensor::from_parts(x.shape().to_vec(), gx)
    }
}

impl Dense {
    fn forward(&self, x: &Tensor) -> Tensor {
        let xd = x.data();
        let out = self
            .weights
            .chunks(self.in_features)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(xd).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        Tensor::from_parts(vec![self.out_features], out)
    }

    /// `Wᵀ·grad`, shaped like the input.
    pub(crate) fn transpose_apply(&self, input_shape: &[usize], grad: &[f64]) -> Tensor {
        let mut gx = vec![0.0; self.in_features];
        for (row, g) in self.weights.chunks(self.in_features).zip(grad) {
            for (acc, w) in gx.iter_mut().zip(row) {
                *acc += w * g;
            }
        }
        Tensor::from_parts(input_shape.to_vec(), gx)
    }
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::MaxPool2d(_) => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }

    /// Checks hyperparameters and blob sizes independent of the input shape.
    pub(crate) fn check_params(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Layer::Conv2d(c) => {
                if c.kernel_h == 0 || c.kernel_w == 0 {
                    return Err("kernel dimensions must be at least 1".into());
                }
                if c.stride == 0 {
                    return Err("stride must be at least 1".into());
                }
                if c.in_channels == 0 || c.out_channels == 0 {
                    return Err("channel counts must be at least 1".into());
                }
                let expected = c.out_channels * c.in_channels * c.kernel_h * c.kernel_w;
                if c.weights.len() != expected {
                    return Err(format!(
                        "conv weights hold {} values, expected {expected}",
                        c.weights.len()
                    ));
                }
                if c.bias.len() != c.out_channels {
                    return Err(format!(
                        "conv bias holds {} values, expected {}",
                        c.bias.len(),
                        c.out_channels
                    ));
                }
                if !finite(&c.weights) || !finite(&c.bias) {
                    return Err("non-finite weight".into());
                }
            }
            Layer::MaxPool2d(p) => {
                if p.window_h == 0 || p.window_w == 0 {
                    return Err("pool window dimensions must be at least 1".into());
                }
                if p.stride == 0 {
                    return Err("stride must be at least 1".into());
                }
            }
            Layer::Dense(d) => {
                if d.in_features == 0 || d.out_features == 0 {
                    return Err("feature counts must be at least 1".into());
                }
                if d.weights.len() != d.in_features * d.out_features {
                    return Err(format!(
                        "dense weights hold {} values, expected {}",
                        d.weights.len(),
                        d.in_features * d.out_features
                    ));
                }
                if d.bias.len() != d.out_features {
                    return Err(format!(
                        "dense bias holds {} values, expected {}",
                        d.bias.len(),
                        d.out_features
                    ));
                }
                if !finite(&d.weights) || !finite(&d.bias) {
                    return Err("non-finite weight".into());
                }
            }
            Layer::Relu | Layer::Flatten => {}
        }
        Ok(())
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match self {
            Layer::Conv2d(c) => {
                let g = c.geometry(input)?;
                Ok(vec![c.out_channels, g.out_h, g.out_w])
            }
            Layer::MaxPool2d(p) => {
                let g = p.geometry(input)?;
                Ok(vec![g.in_c, g.out_h, g.out_w])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Dense(d) => {
                let n: usize = input.iter().product();
                if n != d.in_features {
                    return Err(format!(
                        "dense expects {} inputs, previous layer produces {n}",
                        d.in_features
                    ));
                }
                Ok(vec![d.out_features])
            }
        }
    }

    /// Evaluates the layer. The input shape must already be validated
    /// against the model's shape chain.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        match self {
            Layer::Conv2d(c) => c.forward(x),
            Layer::Relu => Tensor::from_parts(
                x.shape().to_vec(),
                x.data().iter().map(|&v| v.max(0.0)).collect(),
            ),
            Layer::MaxPool2d(p) => p.forward(x),
            Layer::Flatten => Tensor::from_parts(vec![x.len()], x.data().to_vec()),
            Layer::Dense(d) => d.forward(x),
        }
    }

    /// Vector-Jacobian product: maps `∂L/∂output` to `∂L/∂input` at input `x`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Tensor {
        match self {
            Layer::Conv2d(c) => c.transpose_apply(x.shape(), grad_out.data()),
            Layer::Relu => Tensor::from_parts(
                x.shape().to_vec(),
                x.data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect(),
            ),
            Layer::MaxPool2d(p) => p.route(x, grad_out.data()),
            Layer::Flatten => Tensor::from_parts(x.shape().to_vec(), grad_out.data().to_vec()),
            Layer::Dense(d) => d.transpose_apply(x.shape(), grad_out.data()),
        }
    }
}
