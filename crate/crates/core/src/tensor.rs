//! Dense NCHW `f32` tensors and the kernels the classifier's forward pass needs.
//!
//! Every kernel is a pure function: inputs are borrowed, a fresh tensor is
//! returned. Padding is zero for convolution and `-inf` for max pooling.
//! Convolution is cross-correlation (no kernel flip) and carries no bias.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: invalid configuration: {reason}")]
    Config { op: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn dim_err(op: &'static str, axis: &'static str, expected: usize, actual: usize) -> TensorError {
    TensorError::Dimension {
        op,
        axis,
        expected,
        actual,
    }
}

fn config_err(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::Config {
        op,
        reason: reason.into(),
    }
}

/// Rank-4 `(batch, channels, height, width)` tensor stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(dim_err("tensor", "data length", expected, data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Builds a tensor by evaluating `f` at every `[n, c, h, w]` index.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.iter().product());
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f([n, c, h, w]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset(n, c, h, w)]
    }

    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f32) {
        let i = self.offset(n, c, h, w);
        self.data[i] = value;
    }

    /// The `h × w` plane of channel `c` in sample `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies sample `n` out as a batch of one.
    pub fn sample(&self, n: usize) -> Tensor {
        let per = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Channels `start..end` of every sample.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if start > end || end > c {
            return Err(config_err(
                "slice_channels",
                format!("range {start}..{end} outside 0..{c}"),
            ));
        }
        let hw = h * w;
        let mut data = Vec::with_capacity(n * (end - start) * hw);
        for b in 0..n {
            let base = b * c * hw;
            data.extend_from_slice(&self.data[base + start * hw..base + end * hw]);
        }
        Ok(Tensor {
            shape: [n, end - start, h, w],
            data,
        })
    }

    /// Concatenates two tensors along the channel axis.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        const OP: &str = "concat_channels";
        let [n, ca, h, w] = a.shape;
        if b.shape[0] != n {
            return Err(dim_err(OP, "batch", n, b.shape[0]));
        }
        if b.shape[2] != h {
            return Err(dim_err(OP, "height", h, b.shape[2]));
        }
        if b.shape[3] != w {
            return Err(dim_err(OP, "width", w, b.shape[3]));
        }
        let cb = b.shape[1];
        let hw = h * w;
        let mut data = Vec::with_capacity(a.len() + b.len());
        for s in 0..n {
            data.extend_from_slice(&a.data[s * ca * hw..(s + 1) * ca * hw]);
            data.extend_from_slice(&b.data[s * cb * hw..(s + 1) * cb * hw]);
        }
        Ok(Tensor {
            shape: [n, ca + cb, h, w],
            data,
        })
    }
}

/// Geometry of a (possibly grouped) 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl ConvSpec {
    /// Square kernel, stride 1, no padding, one group.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: (kernel, kernel),
            stride: (1, 1),
            padding: (0, 0),
            groups: 1,
        }
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(in_channels, out_channels, 1)
    }

    /// 3×3 depthwise convolution with "same" padding.
    pub fn depthwise(channels: usize, stride: usize) -> Self {
        Self::new(channels, channels, 3)
            .with_stride(stride)
            .with_padding(1)
            .with_groups(channels)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = (stride, stride);
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = (padding, padding);
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "conv2d";
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(config_err(OP, "channel counts must be positive"));
        }
        if self.groups == 0 {
            return Err(config_err(OP, "groups must be positive"));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(config_err(
                OP,
                format!(
                    "groups {} must divide in_channels {} and out_channels {}",
                    self.groups, self.in_channels, self.out_channels
                ),
            ));
        }
        if self.kernel.0 == 0 || self.kernel.1 == 0 {
            return Err(config_err(OP, "kernel extents must be at least 1"));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(config_err(OP, "stride must be at least 1"));
        }
        Ok(())
    }

    /// Expected weight shape `(out, in/groups, kh, kw)`.
    pub fn weight_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels / self.groups.max(1),
            self.kernel.0,
            self.kernel.1,
        ]
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let oh = window_count(h, self.kernel.0, self.stride.0, self.padding.0);
        let ow = window_count(w, self.kernel.1, self.stride.1, self.padding.1);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(config_err(
                "conv2d",
                format!(
                    "kernel {:?} does not fit padded input {}x{}",
                    self.kernel,
                    h + 2 * self.padding.0,
                    w + 2 * self.padding.1
                ),
            )),
        }
    }
}

fn window_count(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// Range of output positions whose input tap `o*stride + k - pad` lands in `0..size`.
fn valid_outputs(out: usize, size: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // largest o with o*stride + k - pad <= size - 1
    let hi = if size + pad > k {
        ((size - 1 + pad - k) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

/// Grouped 2-D cross-correlation without bias.
pub fn conv2d(input: &Tensor, weights: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    const OP: &str = "conv2d";
    spec.validate()?;
    let [n, c, h, w] = input.shape;
    if c != spec.in_channels {
        return Err(dim_err(OP, "input channels", spec.in_channels, c));
    }
    let expected = spec.weight_shape();
    let axes = [
        "weight out_channels",
        "weight in_channels/groups",
        "kernel height",
        "kernel width",
    ];
    for ((axis, e), a) in axes.iter().zip(expected).zip(weights.shape) {
        if e != a {
            return Err(dim_err(OP, axis, e, a));
        }
    }
    let (oh, ow) = spec.output_hw(h, w)?;
    let out_c = spec.out_channels;
    let mut out = vec![0.0f32; n * out_c * oh * ow];

    let pointwise = spec.kernel == (1, 1) && spec.stride == (1, 1) && spec.padding == (0, 0);
    if pointwise {
        pointwise_conv(input, &weights.data, spec, &mut out);
    } else {
        direct_conv(input, &weights.data, spec, (oh, ow), &mut out);
    }
    Tensor::new([n, out_c, oh, ow], out)
}

fn pointwise_conv(input: &Tensor, weights: &[f32], spec: &ConvSpec, out: &mut [f32]) {
    let [n, c, h, w] = input.shape;
    let hw = h * w;
    let cin_g = c / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    for b in 0..n {
        let x = &input.data[b * c * hw..(b + 1) * c * hw];
        let y = &mut out[b * spec.out_channels * hw..(b + 1) * spec.out_channels * hw];
        for g in 0..spec.groups {
            let xg = &x[g * cin_g * hw..(g + 1) * cin_g * hw];
            let mut oc = g * cout_g;
            let end = (g + 1) * cout_g;
            // Four output channels share each pass over an input plane.
            while oc + 4 <= end {
                let (y0, rest) = y[oc * hw..(oc + 4) * hw].split_at_mut(hw);
                let (y1, rest) = rest.split_at_mut(hw);
                let (y2, y3) = rest.split_at_mut(hw);
                let w0 = &weights[oc * cin_g..(oc + 1) * cin_g];
                let w1 = &weights[(oc + 1) * cin_g..(oc + 2) * cin_g];
                let w2 = &weights[(oc + 2) * cin_g..(oc + 3) * cin_g];
                let w3 = &weights[(oc + 3) * cin_g..(oc + 4) * cin_g];
                for ic in 0..cin_g {
                    let plane = &xg[ic * hw..(ic + 1) * hw];
                    let (a0, a1, a2, a3) = (w0[ic], w1[ic], w2[ic], w3[ic]);
                    for i in 0..hw {
                        let v = plane[i];
                        y0[i] += a0 * v;
                        y1[i] += a1 * v;
                        y2[i] += a2 * v;
                        y3[i] += a3 * v;
                    }
                }
                oc += 4;
            }
            while oc < end {
                let yo = &mut y[oc * hw..(oc + 1) * hw];
                let wo = &weights[oc * cin_g..(oc + 1) * cin_g];
                for (ic, &a) in wo.iter().enumerate() {
                    let plane = &xg[ic * hw..(ic + 1) * hw];
                    for (acc, &v) in yo.iter_mut().zip(plane) {
                        *acc += a * v;
                    }
                }
                oc += 1;
            }
        }
    }
}

fn direct_conv(
    input: &Tensor,
    weights: &[f32],
    spec: &ConvSpec,
    (oh, ow): (usize, usize),
    out: &mut [f32],
) {
    let [n, c, h, w] = input.shape;
    let (kh, kw) = spec.kernel;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let cin_g = c / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let ohw = oh * ow;
    for b in 0..n {
        for oc in 0..spec.out_channels {
            let g = oc / cout_g;
            let y = &mut out[(b * spec.out_channels + oc) * ohw..(b * spec.out_channels + oc + 1) * ohw];
            for icg in 0..cin_g {
                let plane = input.plane(b, g * cin_g + icg);
                let kbase = (oc * cin_g + icg) * kh * kw;
                for ky in 0..kh {
                    let (oy_lo, oy_hi) = valid_outputs(oh, h, ky, sh, ph);
                    for kx in 0..kw {
                        let wv = weights[kbase + ky * kw + kx];
                        let (ox_lo, ox_hi) = valid_outputs(ow, w, kx, sw, pw);
                        for oy in oy_lo..oy_hi {
                            let iy = oy * sh + ky - ph;
                            let row = &plane[iy * w..(iy + 1) * w];
                            let yrow = &mut y[oy * ow..(oy + 1) * ow];
                            if sw == 1 {
                                let ix0 = ox_lo + kx - pw;
                                let src = &row[ix0..ix0 + (ox_hi - ox_lo)];
                                for (acc, &v) in yrow[ox_lo..ox_hi].iter_mut().zip(src) {
                                    *acc += wv * v;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    yrow[ox] += wv * row[ox * sw + kx - pw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Inference-mode batch normalisation: `gamma·(x−mean)/sqrt(var+eps) + beta`.
pub fn batchnorm_infer(
    input: &Tensor,
    mean: &[f32],
    var: &[f32],
    gamma: &[f32],
    beta: &[f32],
    eps: f32,
) -> Result<Tensor> {
    const OP: &str = "batchnorm_infer";
    let c = input.channels();
    for (axis, len) in [
        ("mean", mean.len()),
        ("var", var.len()),
        ("gamma", gamma.len()),
        ("beta", beta.len()),
    ] {
        if len != c {
            return Err(dim_err(OP, axis, c, len));
        }
    }
    if eps < 0.0 {
        return Err(config_err(OP, "eps must be non-negative"));
    }
    let mut scale = Vec::with_capacity(c);
    let mut shift = Vec::with_capacity(c);
    for ch in 0..c {
        let denom = f64::from(var[ch]) + f64::from(eps);
        if !(var[ch] >= 0.0 && denom > 0.0) {
            return Err(config_err(
                OP,
                format!("channel {ch}: var + eps must be positive, got {denom}"),
            ));
        }
        let s = f64::from(gamma[ch]) / denom.sqrt();
        scale.push(s);
        shift.push(f64::from(beta[ch]) - f64::from(mean[ch]) * s);
    }
    let hw = input.height() * input.width();
    let mut data = input.data.clone();
    for (i, plane) in data.chunks_mut(hw.max(1)).enumerate() {
        let ch = i % c;
        let (s, t) = (scale[ch] as f32, shift[ch] as f32);
        for v in plane {
            *v = *v * s + t;
        }
    }
    Tensor::new(input.shape, data)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub(crate) fn relu_in_place(t: &mut Tensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

/// Square max-pooling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PoolSpec {
    /// 3×3, stride 2, padding 1: the stem pooling layer.
    pub const STEM: PoolSpec = PoolSpec {
        kernel: 3,
        stride: 2,
        padding: 1,
    };

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(config_err("max_pool2d", "kernel and stride must be positive"));
        }
        if self.padding >= self.kernel {
            return Err(config_err("max_pool2d", "padding must be smaller than the kernel"));
        }
        match (
            window_count(h, self.kernel, self.stride, self.padding),
            window_count(w, self.kernel, self.stride, self.padding),
        ) {
            (Some(oh), Some(ow)) if h > 0 && w > 0 => Ok((oh, ow)),
            _ => Err(config_err("max_pool2d", "window does not fit input")),
        }
    }
}

/// Sliding-window maximum; padded cells never win.
pub fn max_pool2d(input: &Tensor, spec: PoolSpec) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    let (oh, ow) = spec.output_hw(h, w)?;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for b in 0..n {
        for ch in 0..c {
            let plane = input.plane(b, ch);
            for oy in 0..oh {
                let y0 = (oy * spec.stride).saturating_sub(spec.padding);
                let y1 = (oy * spec.stride + spec.kernel - spec.padding).min(h);
                for ox in 0..ow {
                    let x0 = (ox * spec.stride).saturating_sub(spec.padding);
                    let x1 = (ox * spec.stride + spec.kernel - spec.padding).min(w);
                    let mut m = f32::NEG_INFINITY;
                    for y in y0..y1 {
                        for &v in &plane[y * w + x0..y * w + x1] {
                            m = m.max(v);
                        }
                    }
                    out.push(m);
                }
            }
        }
    }
    Tensor::new([n, c, oh, ow], out)
}

/// Interleaves channels across `groups`: channel `g·(C/groups)+k` moves to `k·groups+g`.
pub fn channel_shuffle(input: &Tensor, groups: usize) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    if groups == 0 || c % groups != 0 {
        return Err(config_err(
            "channel_shuffle",
            format!("groups {groups} must divide channel count {c}"),
        ));
    }
    let per_group = c / groups;
    let hw = h * w;
    let mut data = vec![0.0f32; input.len()];
    for b in 0..n {
        let base = b * c * hw;
        for g in 0..groups {
            for k in 0..per_group {
                let src = base + (g * per_group + k) * hw;
                let dst = base + (k * groups + g) * hw;
                data[dst..dst + hw].copy_from_slice(&input.data[src..src + hw]);
            }
        }
    }
    Tensor::new(input.shape, data)
}

/// Spatial mean per channel, producing `(N, C, 1, 1)`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let [n, c, h, w] = input.shape;
    if h == 0 || w == 0 {
        return Err(config_err("global_avg_pool", "spatial extent must be non-zero"));
    }
    let hw = h * w;
    let data = input
        .data
        .chunks(hw)
        .map(|plane| (plane.iter().map(|&v| f64::from(v)).sum::<f64>() / hw as f64) as f32)
        .collect();
    Tensor::new([n, c, 1, 1], data)
}

/// Fully connected layer over the flattened `C·H·W` features: `y = Wx + b`.
///
/// `weights` is row-major `(out_features, in_features)`; output is `(N, out, 1, 1)`.
pub fn linear(input: &Tensor, weights: &[f32], out_features: usize, bias: &[f32]) -> Result<Tensor> {
    const OP: &str = "linear";
    let n = input.batch();
    let features = input.channels() * input.height() * input.width();
    if weights.len() != out_features * features {
        return Err(dim_err(OP, "weights", out_features * features, weights.len()));
    }
    if bias.len() != out_features {
        return Err(dim_err(OP, "bias", out_features, bias.len()));
    }
    let mut out = Vec::with_capacity(n * out_features);
    for x in input.data.chunks(features.max(1)).take(n) {
        for (row, b) in weights.chunks(features.max(1)).zip(bias) {
            out.push(dot(row, x) + b);
        }
    }
    Tensor::new([n, out_features, 1, 1], out)
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for l in 0..8 {
            acc[l] += a[i * 8 + l] * b[i * 8 + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    acc.iter().sum::<f32>() + tail
}

/// Numerically stable softmax (max subtraction, `f64` accumulation).
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&v| (f64::from(v) - f64::from(max)).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| (e / sum) as f32).collect()
}

/// Bilinear interpolation with half-pixel centres, edges clamped.
pub fn bilinear_resize(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [n, c, h, w] = image.shape;
    if out_h == 0 || out_w == 0 {
        return Err(config_err("bilinear_resize", "target extent must be non-zero"));
    }
    if h == 0 || w == 0 {
        return Err(config_err("bilinear_resize", "source extent must be non-zero"));
    }
    let ys = sample_grid(h, out_h);
    let xs = sample_grid(w, out_w);
    let mut out = Vec::with_capacity(n * c * out_h * out_w);
    for b in 0..n {
        for ch in 0..c {
            let plane = image.plane(b, ch);
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                    out.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
    }
    Tensor::new([n, c, out_h, out_w], out)
}

/// Source taps `(lo, hi, frac)` for each destination index.
fn sample_grid(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}
