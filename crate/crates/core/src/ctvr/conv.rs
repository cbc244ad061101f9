use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, CtvrError};
use crate::imaging::{GrayImage, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolKind {
    Max,
    Average,
}

/// Channel-major stack of 2-D maps, indexed `(channel, y, x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "feature map data length");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn from_image(img: &GrayImage) -> Self {
        Self::from_vec(1, img.height(), img.width(), img.data().to_vec())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    /// Row `y` across all channels, channel-major.
    pub fn row(&self, y: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.channels * self.width);
        for c in 0..self.channels {
            let s = self.idx(c, y, 0);
            out.extend_from_slice(&self.data[s..s + self.width]);
        }
        out
    }

    /// Adds a vector laid out like [`FeatureMap::row`] into row `y`.
    pub(crate) fn add_row(&mut self, y: usize, v: &[f64]) {
        for c in 0..self.channels {
            let s = self.idx(c, y, 0);
            for (d, a) in self.data[s..s + self.width].iter_mut().zip(&v[c * self.width..]) {
                *d += a;
            }
        }
    }
}

/// Valid (unpadded) stride-1 convolution followed by an activation and
/// non-overlapping pooling. `pool_size == 1` disables pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    /// `out x in x k x k`
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub pool_kind: PoolKind,
    pub pool_size: usize,
}

impl ConvLayer {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        activation: Activation,
        pool_kind: PoolKind,
        pool_size: usize,
    ) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            kernel: vec![0.0; out_channels * in_channels * kernel_size * kernel_size],
            bias: vec![0.0; out_channels],
            activation,
            pool_kind,
            pool_size: pool_size.max(1),
        }
    }

    /// Kernel uniform in `(-r, r)`, `r = 1 / sqrt(in * k * k)`; zero bias.
    pub fn randomize(&mut self, rng: &mut SeededRng) {
        let r = 1.0 / ((self.in_channels * self.kernel_size * self.kernel_size) as f64).sqrt();
        self.kernel.iter_mut().for_each(|w| *w = rng.random_range(-r..r));
    }

    /// Pooled output size for an input of `h x w`, if the input is large enough.
    pub fn output_shape(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        if h < self.kernel_size || w < self.kernel_size {
            return None;
        }
        let (ch, cw) = (h - self.kernel_size + 1, w - self.kernel_size + 1);
        let (ph, pw) = (ch / self.pool_size, cw / self.pool_size);
        (ph > 0 && pw > 0).then_some((ph, pw))
    }

    fn k_idx(&self, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * self.in_channels + c) * self.kernel_size + i) * self.kernel_size + j
    }
}

pub(crate) struct ConvCache {
    input: FeatureMap,
    pre: FeatureMap,
    /// Flat index into `pre` that each pooled output reads (max pooling only).
    argmax: Vec<usize>,
}

pub(crate) fn conv_forward_cached(
    input: &FeatureMap,
    layer: &ConvLayer,
    index: usize,
) -> Result<(FeatureMap, ConvCache), CtvrError> {
    if input.channels != layer.in_channels {
        return Err(CtvrError::Shape(format!(
            "conv layer {index}: expected {} input channels, got {}",
            layer.in_channels, input.channels
        )));
    }
    let (ph, pw) = layer.output_shape(input.height, input.width).ok_or_else(|| {
        CtvrError::Shape(format!(
            "conv layer {index}: input {}x{} too small for kernel {} and pool {}",
            input.height, input.width, layer.kernel_size, layer.pool_size
        ))
    })?;
    let k = layer.kernel_size;
    let (ch, cw) = (input.height - k + 1, input.width - k + 1);
    let mut pre = FeatureMap::zeros(layer.out_channels, ch, cw);
    for o in 0..layer.out_channels {
        let plane = &mut pre.data[o * ch * cw..(o + 1) * ch * cw];
        plane.iter_mut().for_each(|v| *v = layer.bias[o]);
        for c in 0..layer.in_channels {
            for i in 0..k {
                for j in 0..k {
                    let w = layer.kernel[layer.k_idx(o, c, i, j)];
                    if w == 0.0 {
                        continue;
                    }
                    for y in 0..ch {
                        let src = input.idx(c, y + i, j);
                        let dst = &mut plane[y * cw..(y + 1) * cw];
                        for (d, s) in dst.iter_mut().zip(&input.data[src..src + cw]) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
    }
    let act = layer.activation;
    let s = layer.pool_size;
    let mut out = FeatureMap::zeros(layer.out_channels, ph, pw);
    let mut argmax = Vec::new();
    if layer.pool_kind == PoolKind::Max {
        argmax.reserve(out.data.len());
    }
    for o in 0..layer.out_channels {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = (f64::NEG_INFINITY, 0);
                let mut sum = 0.0;
                for dy in 0..s {
                    for dx in 0..s {
                        let at = pre.idx(o, py * s + dy, px * s + dx);
                        let a = act.apply(pre.data[at]);
                        sum += a;
                        if a > best.0 {
                            best = (a, at);
                        }
                    }
                }
                let v = match layer.pool_kind {
                    PoolKind::Max => {
                        argmax.push(best.1);
                        best.0
                    }
                    PoolKind::Average => sum / (s * s) as f64,
                };
                let oi = out.idx(o, py, px);
                out.data[oi] = v;
            }
        }
    }
    Ok((
        out,
        ConvCache {
            input: input.clone(),
            pre,
            argmax,
        },
    ))
}

/// Accumulates parameter gradients into `grad`; returns the input gradient
/// when requested.
pub(crate) fn conv_backward(
    cache: &ConvCache,
    layer: &ConvLayer,
    d_out: &FeatureMap,
    grad: &mut ConvLayer,
    want_input_grad: bool,
) -> Option<FeatureMap> {
    let pre = &cache.pre;
    let input = &cache.input;
    let s = layer.pool_size;
    let mut d_pre = FeatureMap::zeros(pre.channels, pre.height, pre.width);
    for o in 0..d_out.channels {
        for py in 0..d_out.height {
            for px in 0..d_out.width {
                let oi = d_out.idx(o, py, px);
                let g = d_out.data[oi];
                match layer.pool_kind {
                    PoolKind::Max => d_pre.data[cache.argmax[oi]] += g,
                    PoolKind::Average => {
                        let share = g / (s * s) as f64;
                        for dy in 0..s {
                            for dx in 0..s {
                                let at = pre.idx(o, py * s + dy, px * s + dx);
                                d_pre.data[at] += share;
                            }
                        }
                    }
                }
            }
        }
    }
    for (d, &z) in d_pre.data.iter_mut().zip(&pre.data) {
        if *d != 0.0 {
            *d *= layer.activation.derivative(z);
        }
    }
    let k = layer.kernel_size;
    let (ch, cw) = (pre.height, pre.width);
    let mut d_in = want_input_grad.then(|| FeatureMap::zeros(input.channels, input.height, input.width));
    for o in 0..layer.out_channels {
        let plane = &d_pre.data[o * ch * cw..(o + 1) * ch * cw];
        grad.bias[o] += plane.iter().sum::<f64>();
        for c in 0..layer.in_channels {
            for i in 0..k {
                for j in 0..k {
                    let ki = layer.k_idx(o, c, i, j);
                    let mut acc = 0.0;
                    for y in 0..ch {
                        let src = input.idx(c, y + i, j);
                        acc += plane[y * cw..(y + 1) * cw]
                            .iter()
                            .zip(&input.data[src..src + cw])
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    }
                    grad.kernel[ki] += acc;
                    if let Some(d_in) = d_in.as_mut() {
                        let w = layer.kernel[ki];
                        for y in 0..ch {
                            let dst = d_in.idx(c, y + i, j);
                            for (d, g) in d_in.data[dst..dst + cw].iter_mut().zip(&plane[y * cw..(y + 1) * cw]) {
                                *d += w * g;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// One convolution layer: cross-correlation, bias, activation, pooling.
pub fn conv_forward(input: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap, CtvrError> {
    conv_forward_cached(input, layer, 0).map(|(out, _)| out)
}

/// Final feature map of the stack applied to `img`.
pub fn conv_feature_map(img: &GrayImage, layers: &[ConvLayer]) -> Result<FeatureMap, CtvrError> {
    let mut map = FeatureMap::from_image(img);
    for (i, layer) in layers.iter().enumerate() {
        map = conv_forward_cached(&map, layer, i)?.0;
    }
    Ok(map)
}

/// Flattened final feature map (`T_F`), channel-major.
pub fn extract_conv_features(img: &GrayImage, layers: &[ConvLayer]) -> Result<Vec<f64>, CtvrError> {
    conv_feature_map(img, layers).map(FeatureMap::into_data)
}
