//! Dense `f32` tensors in batch × channel × height × width layout and the
//! primitive operations the mixer and model are built from.

use crate::error::{Error, Result};

/// Dense row-major tensor of rank 1 to 4.
///
/// Rank-4 tensors are interpreted as `[batch, channel, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("extents multiply to {len} but data has {} elements", data.len()),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Result<Self> {
        check_shape(shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every flat index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f32) -> Result<Self> {
        check_shape(shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..len).map(f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Returns `(batch, channels, height, width)` for a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::InvalidShape {
                shape: self.shape.clone(),
                reason: "expected rank 4 (batch, channel, height, width)".into(),
            }),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// The `h × w` plane of channel `c` in sample `n`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let (_, ch, h, w) = self.dims4().expect("plane() needs a rank-4 tensor");
        let start = (n * ch + c) * h * w;
        &self.data[start..start + h * w]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let (_, ch, h, w) = self.dims4().expect("plane_mut() needs a rank-4 tensor");
        let start = (n * ch + c) * h * w;
        &mut self.data[start..start + h * w]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f32) -> Self {
        self.map(|v| v * s)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank must be between 1 and 4".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "all extents must be at least 1".into(),
        });
    }
    Ok(())
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            expected: a.shape.clone(),
            found: b.shape.clone(),
        });
    }
    Ok(())
}

/// Convolution weights in `[out, in_per_group, kh, kw]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub out_channels: usize,
    pub in_channels_per_group: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl ConvKernel {
    pub fn new(
        out_channels: usize,
        in_channels_per_group: usize,
        kh: usize,
        kw: usize,
        weights: Vec<f32>,
        bias: Option<Vec<f32>>,
    ) -> Result<Self> {
        let expected = out_channels * in_channels_per_group * kh * kw;
        if expected == 0 || weights.len() != expected {
            return Err(Error::InvalidShape {
                shape: vec![out_channels, in_channels_per_group, kh, kw],
                reason: format!("kernel holds {} weights, expected {expected}", weights.len()),
            });
        }
        if let Some(b) = &bias {
            if b.len() != out_channels {
                return Err(Error::InvalidShape {
                    shape: vec![b.len()],
                    reason: format!("bias length must equal out_channels = {out_channels}"),
                });
            }
        }
        Ok(Self {
            out_channels,
            in_channels_per_group,
            kh,
            kw,
            weights,
            bias,
        })
    }

    /// A `1×1` kernel from a row-major `out × in` matrix.
    pub fn pointwise(out: usize, inp: usize, matrix: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        Self::new(out, inp, 1, 1, matrix, bias)
    }

    /// Identity `1×1` map on `channels`, zero bias.
    pub fn pointwise_identity(channels: usize) -> Self {
        let mut m = vec![0.0; channels * channels];
        for i in 0..channels {
            m[i * channels + i] = 1.0;
        }
        Self::new(channels, channels, 1, 1, m, Some(vec![0.0; channels])).expect("valid identity")
    }

    /// Depthwise `kh × kw` kernel with a single 1 at the anchor `(kh/2, kw/2)`.
    pub fn depthwise_identity(channels: usize, kh: usize, kw: usize) -> Self {
        let mut w = vec![0.0; channels * kh * kw];
        for c in 0..channels {
            w[c * kh * kw + (kh / 2) * kw + kw / 2] = 1.0;
        }
        Self::new(channels, 1, kh, kw, w, None).expect("valid identity")
    }

    /// Builds a kernel from a rank-4 weight tensor and optional rank-1 bias.
    pub fn from_tensors(weight: &Tensor, bias: Option<&Tensor>) -> Result<Self> {
        let (o, i, kh, kw) = weight.dims4()?;
        Self::new(o, i, kh, kw, weight.data().to_vec(), bias.map(|b| b.data().to_vec()))
    }

    pub fn is_depthwise(&self) -> bool {
        self.in_channels_per_group == 1
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    fn bias_at(&self, o: usize) -> f32 {
        self.bias.as_ref().map_or(0.0, |b| b[o])
    }
}

/// Per-channel affine parameters for [`mln_normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub epsilon: f32,
}

impl NormParams {
    pub const DEFAULT_EPSILON: f32 = 1e-5;

    pub fn new(gamma: Vec<f32>, beta: Vec<f32>, epsilon: f32) -> Result<Self> {
        if gamma.len() != beta.len() {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("length {} differs from gamma length {}", beta.len(), gamma.len()),
            });
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "must be positive".into(),
            });
        }
        Ok(Self { gamma, beta, epsilon })
    }

    pub fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("hadamard", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

/// Per-channel 2D cross-correlation with a depthwise kernel.
///
/// With `same_pad` the input is zero padded so the output keeps `H × W`; the
/// kernel anchor sits at `(kh/2, kw/2)`. Without it only fully covered
/// positions are produced.
pub fn conv2d_depthwise(x: &Tensor, k: &ConvKernel, same_pad: bool) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if !k.is_depthwise() {
        return Err(Error::InvalidParameter {
            name: "kernel",
            reason: format!("depthwise kernel needs 1 input channel per group, has {}", k.in_channels_per_group),
        });
    }
    if k.out_channels != c {
        return Err(Error::ChannelMismatch {
            op: "conv2d_depthwise",
            expected: k.out_channels,
            found: c,
        });
    }
    let (pad_y, pad_x, oh, ow) = if same_pad {
        (k.kh / 2, k.kw / 2, h, w)
    } else {
        if k.kh > h || k.kw > w {
            return Err(Error::InvalidShape {
                shape: x.shape.clone(),
                reason: format!("input smaller than {}×{} kernel without padding", k.kh, k.kw),
            });
        }
        (0, 0, h - k.kh + 1, w - k.kw + 1)
    };
    let mut out = vec![0.0f32; n * c * oh * ow];
    for b in 0..n {
        for ch in 0..c {
            let src = x.plane(b, ch);
            let dst = &mut out[(b * c + ch) * oh * ow..][..oh * ow];
            let kern = &k.weights[ch * k.kh * k.kw..][..k.kh * k.kw];
            dst.fill(k.bias_at(ch));
            for ki in 0..k.kh {
                for kj in 0..k.kw {
                    let wv = kern[ki * k.kw + kj];
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..oh {
                        let iy = oy as isize + ki as isize - pad_y as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * w..][..w];
                        let out_row = &mut dst[oy * ow..][..ow];
                        // valid ox range such that 0 <= ox + kj - pad_x < w
                        let lo = pad_x.saturating_sub(kj);
                        let hi = (w + pad_x).saturating_sub(kj).min(ow);
                        for ox in lo..hi {
                            out_row[ox] += wv * row[ox + kj - pad_x];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

/// Pointwise channel mixing: `out_i = Σ_c φ[i,c]·x_c + bias_i`.
pub fn conv1x1(x: &Tensor, k: &ConvKernel) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if k.kh != 1 || k.kw != 1 {
        return Err(Error::InvalidParameter {
            name: "kernel",
            reason: format!("expected a 1×1 kernel, got {}×{}", k.kh, k.kw),
        });
    }
    if k.in_channels_per_group != c {
        return Err(Error::ChannelMismatch {
            op: "conv1x1",
            expected: k.in_channels_per_group,
            found: c,
        });
    }
    let hw = h * w;
    let oc = k.out_channels;
    let mut out = vec![0.0f32; n * oc * hw];
    for b in 0..n {
        let src = &x.data[b * c * hw..][..c * hw];
        for o in 0..oc {
            let dst = &mut out[(b * oc + o) * hw..][..hw];
            dst.fill(k.bias_at(o));
            let row = &k.weights[o * c..][..c];
            for (ci, &wv) in row.iter().enumerate() {
                let plane = &src[ci * hw..][..hw];
                for (d, &s) in dst.iter_mut().zip(plane) {
                    *d += wv * s;
                }
            }
        }
    }
    Tensor::new(vec![n, oc, h, w], out)
}

/// Dense (ungrouped) strided convolution with symmetric zero padding.
/// Used for patch embedding and downsampling between stages.
pub fn conv2d(x: &Tensor, k: &ConvKernel, stride: usize, pad: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if k.in_channels_per_group != c {
        return Err(Error::ChannelMismatch {
            op: "conv2d",
            expected: k.in_channels_per_group,
            found: c,
        });
    }
    if stride == 0 {
        return Err(Error::InvalidParameter {
            name: "stride",
            reason: "must be at least 1".into(),
        });
    }
    if h + 2 * pad < k.kh || w + 2 * pad < k.kw {
        return Err(Error::InvalidShape {
            shape: x.shape.clone(),
            reason: format!("padded input smaller than {}×{} kernel", k.kh, k.kw),
        });
    }
    let oh = (h + 2 * pad - k.kh) / stride + 1;
    let ow = (w + 2 * pad - k.kw) / stride + 1;
    let oc = k.out_channels;
    let mut out = vec![0.0f32; n * oc * oh * ow];
    for b in 0..n {
        for o in 0..oc {
            let dst = &mut out[(b * oc + o) * oh * ow..][..oh * ow];
            dst.fill(k.bias_at(o));
            for ci in 0..c {
                let src = x.plane(b, ci);
                let kern = &k.weights[(o * c + ci) * k.kh * k.kw..][..k.kh * k.kw];
                for ki in 0..k.kh {
                    for kj in 0..k.kw {
                        let wv = kern[ki * k.kw + kj];
                        for oy in 0..oh {
                            let iy = (oy * stride + ki) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &src[iy as usize * w..][..w];
                            for ox in 0..ow {
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[oy * ow + ox] += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, oc, oh, ow], out)
}

/// Normalizes each sample over all of its `(C, H, W)` elements, then applies
/// the per-channel affine transform.
pub fn mln_normalize(x: &Tensor, p: &NormParams) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if p.gamma.len() != c {
        return Err(Error::ChannelMismatch {
            op: "mln_normalize",
            expected: p.gamma.len(),
            found: c,
        });
    }
    let per = c * h * w;
    let mut out = Vec::with_capacity(x.len());
    for b in 0..n {
        let s = &x.data[b * per..][..per];
        let mean = s.iter().map(|&v| v as f64).sum::<f64>() / per as f64;
        let var = s.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / per as f64;
        let inv = 1.0 / (var + p.epsilon as f64).sqrt();
        for ch in 0..c {
            let g = p.gamma[ch] as f64;
            let bt = p.beta[ch] as f64;
            out.extend(
                s[ch * h * w..][..h * w]
                    .iter()
                    .map(|&v| ((v as f64 - mean) * inv * g + bt) as f32),
            );
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// Exact (erf-based) GELU.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(gelu_scalar)
}

pub fn gelu_scalar(v: f32) -> f32 {
    let v = v as f64;
    (0.5 * v * (1.0 + libm::erf(v * std::f64::consts::FRAC_1_SQRT_2))) as f32
}

/// Splits the channel axis into `groups` equal, contiguous pieces.
pub fn split_channels(x: &Tensor, groups: usize) -> Result<Vec<Tensor>> {
    let (_, c, _, _) = x.dims4()?;
    if groups == 0 || c % groups != 0 {
        return Err(Error::Indivisible { channels: c, groups });
    }
    split_channels_sizes(x, &vec![c / groups; groups])
}

/// Splits the channel axis into contiguous pieces of the given sizes.
pub fn split_channels_sizes(x: &Tensor, sizes: &[usize]) -> Result<Vec<Tensor>> {
    let (n, c, h, w) = x.dims4()?;
    if sizes.iter().sum::<usize>() != c || sizes.contains(&0) {
        return Err(Error::InvalidParameter {
            name: "sizes",
            reason: format!("{sizes:?} must be positive and sum to {c} channels"),
        });
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &g in sizes {
        let mut data = Vec::with_capacity(n * g * hw);
        for b in 0..n {
            data.extend_from_slice(&x.data[(b * c + start) * hw..][..g * hw]);
        }
        out.push(Tensor::new(vec![n, g, h, w], data)?);
        start += g;
    }
    Ok(out)
}

/// Group sizes for splitting `channels` into `groups` near-uniform pieces:
/// the first `channels % groups` groups carry one extra channel.
pub fn balanced_split_sizes(channels: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || groups > channels {
        return Err(Error::Indivisible { channels, groups });
    }
    let base = channels / groups;
    let extra = channels % groups;
    Ok((0..groups).map(|g| base + usize::from(g < extra)).collect())
}

/// Inverse of the channel splits: concatenates along the channel axis.
pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or(Error::InvalidParameter {
        name: "parts",
        reason: "cannot concatenate an empty list".into(),
    })?;
    let (n, _, h, w) = first.dims4()?;
    let mut total = 0;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                expected: first.shape.clone(),
                found: p.shape.clone(),
            });
        }
        total += pc;
    }
    let hw = h * w;
    let mut data = Vec::with_capacity(n * total * hw);
    for b in 0..n {
        for p in parts {
            let pc = p.shape[1];
            data.extend_from_slice(&p.data[b * pc * hw..][..pc * hw]);
        }
    }
    Tensor::new(vec![n, total, h, w], data)
}

/// Mean over the spatial extents; returns `[batch, channels]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let hw = h * w;
    let data = x
        .data
        .chunks_exact(hw)
        .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32)
        .collect();
    Tensor::new(vec![n, c], data)
}

/// Fully connected layer on a `[batch, in]` tensor with `[out, in]` weights.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (n, inp) = match x.shape[..] {
        [n, i] => (n, i),
        _ => {
            return Err(Error::InvalidShape {
                shape: x.shape.clone(),
                reason: "linear expects a [batch, features] input".into(),
            })
        }
    };
    let out = match weight.shape[..] {
        [o, i] if i == inp => o,
        _ => {
            return Err(Error::ShapeMismatch {
                op: "linear",
                expected: vec![weight.shape[0], inp],
                found: weight.shape.clone(),
            })
        }
    };
    if let Some(b) = bias {
        if b.shape != [out] {
            return Err(Error::ShapeMismatch {
                op: "linear",
                expected: vec![out],
                found: b.shape.clone(),
            });
        }
    }
    let mut data = Vec::with_capacity(n * out);
    for b in 0..n {
        let xi = &x.data[b * inp..][..inp];
        for o in 0..out {
            let wr = &weight.data[o * inp..][..inp];
            let acc: f32 = wr.iter().zip(xi).map(|(a, b)| a * b).sum();
            data.push(acc + bias.map_or(0.0, |bb| bb.data[o]));
        }
    }
    Tensor::new(vec![n, out], data)
}
