//! Layer kernels over batches stored row-major, one sample per row, with
//! spatial activations in height-width-channel order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, Op};

/// Activation shape, channels innermost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn flat(len: usize) -> Self {
        Self::new(1, 1, len)
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid convolution, stride 1, square kernel.
    Conv { maps: usize, kernel: usize },
    Dense { units: usize },
    Relu,
    /// 2x2 max pooling, stride 2.
    MaxPool,
    /// Inverted dropout; identity at inference.
    Dropout { rate: f64 },
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Conv {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    /// maps x (kernel * kernel * in_channels), patch order (row, col, channel)
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// outputs x inputs
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layer {
    Conv(Conv),
    Dense(Dense),
    Relu { len: usize },
    MaxPool { input: Shape },
    Dropout { rate: f64, len: usize },
    Flatten { len: usize },
}

/// Per-layer state recorded by a forward pass.
#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Conv { cols: Vec<f64> },
    Dense { input: Vec<f64> },
    Relu { mask: Vec<bool> },
    Pool { argmax: Vec<u32> },
    Dropout { scale: Option<Vec<f64>> },
    Identity,
}

/// Switch positions of one layer at a recorded input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSwitch {
    /// Layer has no switches.
    Fixed,
    /// Per-unit ReLU state (true = passing).
    Relu(Vec<bool>),
    /// Per-output index (within the input) selected by max pooling.
    Pool(Vec<u32>),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ParamGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Row `r` of a backward batch reads switches of the recorded sample it
/// belongs to; a single recorded sample is shared by every row.
#[inline]
fn cache_row(r: usize, cached_rows: usize) -> usize {
    if cached_rows == 1 {
        0
    } else {
        r
    }
}

impl Conv {
    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.input.channels
    }

    fn im2col(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let (iw, ic) = (self.input.width, self.input.channels);
        let (oh, ow) = (self.output.height, self.output.width);
        let k = self.kernel;
        let patch = self.patch();
        let in_len = self.input.len();
        let mut cols = vec![0.0; rows * oh * ow * patch];
        for s in 0..rows {
            let img = &x[s * in_len..(s + 1) * in_len];
            for r in 0..oh {
                for c in 0..ow {
                    let base = ((s * oh + r) * ow + c) * patch;
                    for ki in 0..k {
                        let src = ((r + ki) * iw + c) * ic;
                        let dst = base + ki * k * ic;
                        cols[dst..dst + k * ic].copy_from_slice(&img[src..src + k * ic]);
                    }
                }
            }
        }
        cols
    }

    fn col2im_add(&self, dcols: &[f64], rows: usize) -> Vec<f64> {
        let (iw, ic) = (self.input.width, self.input.channels);
        let (oh, ow) = (self.output.height, self.output.width);
        let k = self.kernel;
        let patch = self.patch();
        let in_len = self.input.len();
        let mut dx = vec![0.0; rows * in_len];
        for s in 0..rows {
            let img = &mut dx[s * in_len..(s + 1) * in_len];
            for r in 0..oh {
                for c in 0..ow {
                    let base = ((s * oh + r) * ow + c) * patch;
                    for ki in 0..k {
                        let dst = ((r + ki) * iw + c) * ic;
                        let src = base + ki * k * ic;
                        for (d, v) in img[dst..dst + k * ic].iter_mut().zip(&dcols[src..src + k * ic]) {
                            *d += v;
                        }
                    }
                }
            }
        }
        dx
    }
}

impl Layer {
    pub(crate) fn build(spec: &LayerSpec, input: Shape, rng: &mut ChaCha8Rng) -> Result<(Layer, Shape), String> {
        Ok(match *spec {
            LayerSpec::Conv { maps, kernel } => {
                if kernel == 0 || maps == 0 || kernel > input.height || kernel > input.width {
                    return Err(format!("conv {maps}@{kernel}x{kernel} does not fit input {input:?}"));
                }
                let output = Shape::new(input.height - kernel + 1, input.width - kernel + 1, maps);
                let fan_in = kernel * kernel * input.channels;
                let weight = he_uniform(rng, maps * fan_in, fan_in);
                (
                    Layer::Conv(Conv {
                        input,
                        output,
                        kernel,
                        weight,
                        bias: vec![0.0; maps],
                    }),
                    output,
                )
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err("dense layer needs at least one unit".into());
                }
                let fan_in = input.len();
                (
                    Layer::Dense(Dense {
                        inputs: fan_in,
                        outputs: units,
                        weight: he_uniform(rng, units * fan_in, fan_in),
                        bias: vec![0.0; units],
                    }),
                    Shape::flat(units),
                )
            }
            LayerSpec::Relu => (Layer::Relu { len: input.len() }, input),
            LayerSpec::MaxPool => {
                if input.height < 2 || input.width < 2 {
                    return Err(format!("max pool does not fit input {input:?}"));
                }
                (
                    Layer::MaxPool { input },
                    Shape::new(input.height / 2, input.width / 2, input.channels),
                )
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                (Layer::Dropout { rate, len: input.len() }, input)
            }
            LayerSpec::Flatten => (Layer::Flatten { len: input.len() }, Shape::flat(input.len())),
        })
    }

    pub(crate) fn output_len(&self) -> usize {
        match self {
            Layer::Conv(c) => c.output.len(),
            Layer::Dense(d) => d.outputs,
            Layer::Relu { len } | Layer::Dropout { len, .. } | Layer::Flatten { len } => *len,
            Layer::MaxPool { input } => (input.height / 2) * (input.width / 2) * input.channels,
        }
    }

    pub(crate) fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    /// Forward over `rows` samples. Dropout is active only when `train` is given.
    pub(crate) fn forward(
        &self,
        x: &[f64],
        rows: usize,
        train: Option<&mut ChaCha8Rng>,
    ) -> (Vec<f64>, Cache) {
        match self {
            Layer::Conv(conv) => {
                let cols = conv.im2col(x, rows);
                let p = rows * conv.output.height * conv.output.width;
                let maps = conv.output.channels;
                let mut y = Vec::with_capacity(p * maps);
                for _ in 0..p {
                    y.extend_from_slice(&conv.bias);
                }
                gemm(p, conv.patch(), maps, &cols, Op::N, &conv.weight, Op::T, 1.0, &mut y);
                (y, Cache::Conv { cols })
            }
            Layer::Dense(d) => {
                let mut y = Vec::with_capacity(rows * d.outputs);
                for _ in 0..rows {
                    y.extend_from_slice(&d.bias);
                }
                gemm(rows, d.inputs, d.outputs, x, Op::N, &d.weight, Op::T, 1.0, &mut y);
                (y, Cache::Dense { input: x.to_vec() })
            }
            Layer::Relu { .. } => {
                let mask: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
                let y = x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                (y, Cache::Relu { mask })
            }
            Layer::MaxPool { input } => {
                let (h, w, c) = (input.height, input.width, input.channels);
                let (oh, ow) = (h / 2, w / 2);
                let out_len = oh * ow * c;
                let mut y = vec![0.0; rows * out_len];
                let mut argmax = vec![0u32; rows * out_len];
                for s in 0..rows {
                    let img = &x[s * input.len()..(s + 1) * input.len()];
                    for r in 0..oh {
                        for col in 0..ow {
                            for ch in 0..c {
                                let mut best = ((2 * r) * w + 2 * col) * c + ch;
                                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                                    let idx = ((2 * r + dr) * w + 2 * col + dc) * c + ch;
                                    if img[idx] > img[best] {
                                        best = idx;
                                    }
                                }
                                let o = s * out_len + (r * ow + col) * c + ch;
                                y[o] = img[best];
                                argmax[o] = best as u32;
                            }
                        }
                    }
                }
                (y, Cache::Pool { argmax })
            }
            Layer::Dropout { rate, .. } => match train {
                Some(rng) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let scale: Vec<f64> = (0..x.len())
                        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    let y = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
                    (y, Cache::Dropout { scale: Some(scale) })
                }
                _ => (x.to_vec(), Cache::Dropout { scale: None }),
            },
            Layer::Flatten { .. } => (x.to_vec(), Cache::Identity),
        }
    }

    /// Replays the layer on one sample with its switches fixed.
    pub(crate) fn forward_frozen(&self, x: &[f64], switch: &LayerSwitch) -> Vec<f64> {
        match (self, switch) {
            (Layer::Relu { .. }, LayerSwitch::Relu(mask)) => x
                .iter()
                .zip(mask)
                .map(|(&v, &on)| if on { v } else { 0.0 })
                .collect(),
            (Layer::MaxPool { .. }, LayerSwitch::Pool(argmax)) => {
                argmax.iter().map(|&i| x[i as usize]).collect()
            }
            _ => self.forward(x, 1, None).0,
        }
    }

    pub(crate) fn switch(cache: &Cache) -> LayerSwitch {
        match cache {
            Cache::Relu { mask } => LayerSwitch::Relu(mask.clone()),
            Cache::Pool { argmax } => LayerSwitch::Pool(argmax.clone()),
            _ => LayerSwitch::Fixed,
        }
    }

    /// Backward over `rows` cotangent rows. `cached_rows` is the batch size
    /// of the recorded forward pass: either `rows`, or 1 when every row shares
    /// one recorded sample (parameter gradients are then not available).
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        cached_rows: usize,
        dy: &[f64],
        rows: usize,
        grad: Option<&mut ParamGrad>,
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        match (self, cache) {
            (Layer::Conv(conv), Cache::Conv { cols }) => {
                let p_per = conv.output.height * conv.output.width;
                let maps = conv.output.channels;
                let patch = conv.patch();
                if let Some(g) = grad {
                    debug_assert_eq!(cached_rows, rows);
                    let p = rows * p_per;
                    gemm(maps, p, patch, dy, Op::T, cols, Op::N, 1.0, &mut g.weight);
                    for row in dy.chunks_exact(maps) {
                        for (b, v) in g.bias.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                }
                need_dx.then(|| {
                    let p = rows * p_per;
                    let mut dcols = vec![0.0; p * patch];
                    gemm(p, maps, patch, dy, Op::N, &conv.weight, Op::N, 0.0, &mut dcols);
                    conv.col2im_add(&dcols, rows)
                })
            }
            (Layer::Dense(d), Cache::Dense { input }) => {
                if let Some(g) = grad {
                    debug_assert_eq!(cached_rows, rows);
                    gemm(d.outputs, rows, d.inputs, dy, Op::T, input, Op::N, 1.0, &mut g.weight);
                    for row in dy.chunks_exact(d.outputs) {
                        for (b, v) in g.bias.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                }
                need_dx.then(|| {
                    let mut dx = vec![0.0; rows * d.inputs];
                    gemm(rows, d.outputs, d.inputs, dy, Op::N, &d.weight, Op::N, 0.0, &mut dx);
                    dx
                })
            }
            (Layer::Relu { len }, Cache::Relu { mask }) => need_dx.then(|| {
                let mut dx = dy.to_vec();
                for r in 0..rows {
                    let m = &mask[cache_row(r, cached_rows) * len..][..*len];
                    for (v, &on) in dx[r * len..(r + 1) * len].iter_mut().zip(m) {
                        if !on {
                            *v = 0.0;
                        }
                    }
                }
                dx
            }),
            (Layer::MaxPool { input }, Cache::Pool { argmax }) => need_dx.then(|| {
                let in_len = input.len();
                let out_len = self.output_len();
                let mut dx = vec![0.0; rows * in_len];
                for r in 0..rows {
                    let am = &argmax[cache_row(r, cached_rows) * out_len..][..out_len];
                    let dst = &mut dx[r * in_len..(r + 1) * in_len];
                    for (&i, &g) in am.iter().zip(&dy[r * out_len..(r + 1) * out_len]) {
                        dst[i as usize] += g;
                    }
                }
                dx
            }),
            (Layer::Dropout { len, .. }, Cache::Dropout { scale }) => need_dx.then(|| match scale {
                Some(scale) => {
                    let mut dx = dy.to_vec();
                    for r in 0..rows {
                        let s = &scale[cache_row(r, cached_rows) * len..][..*len];
                        for (v, f) in dx[r * len..(r + 1) * len].iter_mut().zip(s) {
                            *v *= f;
                        }
                    }
                    dx
                }
                None => dy.to_vec(),
            }),
            (Layer::Flatten { .. }, Cache::Identity) => need_dx.then(|| dy.to_vec()),
            _ => unreachable!("cache does not belong to layer"),
        }
    }
}

fn he_uniform(rng: &mut ChaCha8Rng, count: usize, fan_in: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
}
