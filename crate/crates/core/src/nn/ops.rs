//! Operator kernels and their stateful wrappers.
//!
//! Each operator comes as a pair of pure functions (`*_forward`,
//! `*_backward`) plus an `*Op` struct that owns parameters, caches the
//! forward input, and accumulates parameter gradients across a batch.

use crate::convert::ConvWeights3d;
use crate::nn::{Feature3, NnError};
use crate::volume::Volume4D;

/// Variance guard for the normalization denominator.
pub const NORM_EPS: f64 = 1e-5;

// ---------------------------------------------------------------------------
// depth-1 3D convolution

/// Same-padded `1xKxK` convolution: each depth slice is convolved
/// independently with the shared spatial kernel.
///
/// `out[o, d] = bias[o] + sum_i w[o, i] * x[i, d]` with zero padding in the
/// plane and an odd kernel so input and output shapes match.
pub fn conv3d_1kk_forward(
    x: &Volume4D,
    w: &ConvWeights3d,
    bias: &[f64],
) -> Result<Volume4D, NnError> {
    check_conv_shapes(x, w, bias)?;
    let [in_c, d_n, h_n, w_n] = x.dims();
    let k = w.kernel;
    let half = k / 2;
    let mut out = Volume4D::new(w.out_channels, d_n, h_n, w_n, 0.0)?;
    for o in 0..w.out_channels {
        for d in 0..d_n {
            let dst = out.plane_mut(o, d);
            dst.fill(bias[o]);
            for i in 0..in_c {
                let src = x.plane(i, d);
                accumulate_correlation(dst, src, w, o, i, h_n, w_n, half);
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv3d_1kk_forward`] with respect to input, weights, and
/// bias, given the cached forward input.
pub fn conv3d_1kk_backward(
    grad_out: &Volume4D,
    x: &Volume4D,
    w: &ConvWeights3d,
) -> Result<(Volume4D, Vec<f64>, Vec<f64>), NnError> {
    check_conv_shapes(x, w, &vec![0.0; w.out_channels])?;
    let [in_c, d_n, h_n, w_n] = x.dims();
    if grad_out.dims() != [w.out_channels, d_n, h_n, w_n] {
        return Err(NnError::Shape(format!(
            "grad_out dims {:?} do not match conv output {:?}",
            grad_out.dims(),
            [w.out_channels, d_n, h_n, w_n]
        )));
    }
    let k = w.kernel;
    let half = k / 2;
    let mut grad_x = Volume4D::new(in_c, d_n, h_n, w_n, 0.0)?;
    let mut grad_w = vec![0.0; w.data.len()];
    let mut grad_b = vec![0.0; w.out_channels];

    for o in 0..w.out_channels {
        for d in 0..d_n {
            let g = grad_out.plane(o, d);
            grad_b[o] += g.iter().sum::<f64>();
            for i in 0..in_c {
                let src = x.plane(i, d);
                for u in 0..k {
                    let dy = u as isize - half as isize;
                    let (y_lo, y_hi) = valid_range(dy, h_n);
                    for v in 0..k {
                        let dx = v as isize - half as isize;
                        let (x_lo, x_hi) = valid_range(dx, w_n);
                        let widx = ((o * in_c + i) * k + u) * k + v;
                        let wt = w.data[widx];
                        let mut acc = 0.0;
                        for y in y_lo..y_hi {
                            let src_row = ((y as isize + dy) as usize) * w_n;
                            let g_row = y * w_n;
                            for xx in x_lo..x_hi {
                                let s = (xx as isize + dx) as usize;
                                acc += g[g_row + xx] * src[src_row + s];
                            }
                        }
                        grad_w[widx] += acc;
                        let gx = grad_x.plane_mut(i, d);
                        for y in y_lo..y_hi {
                            let src_row = ((y as isize + dy) as usize) * w_n;
                            let g_row = y * w_n;
                            for xx in x_lo..x_hi {
                                let s = (xx as isize + dx) as usize;
                                gx[src_row + s] += wt * g[g_row + xx];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

fn check_conv_shapes(x: &Volume4D, w: &ConvWeights3d, bias: &[f64]) -> Result<(), NnError> {
    if x.channels() != w.in_channels {
        return Err(NnError::ChannelMismatch {
            expected: w.in_channels,
            got: x.channels(),
        });
    }
    if bias.len() != w.out_channels {
        return Err(NnError::BiasLength {
            expected: w.out_channels,
            got: bias.len(),
        });
    }
    if w.kernel % 2 == 0 {
        return Err(NnError::EvenKernel(w.kernel));
    }
    Ok(())
}

/// `dst += w[o, i] (cross-correlation) src` over one plane.
fn accumulate_correlation(
    dst: &mut [f64],
    src: &[f64],
    w: &ConvWeights3d,
    o: usize,
    i: usize,
    h_n: usize,
    w_n: usize,
    half: usize,
) {
    let k = w.kernel;
    for u in 0..k {
        let dy = u as isize - half as isize;
        let (y_lo, y_hi) = valid_range(dy, h_n);
        for v in 0..k {
            let dx = v as isize - half as isize;
            let (x_lo, x_hi) = valid_range(dx, w_n);
            let wt = w.at(o, i, u, v);
            for y in y_lo..y_hi {
                let src_row = ((y as isize + dy) as usize) * w_n;
                let dst_row = y * w_n;
                for xx in x_lo..x_hi {
                    let s = (xx as isize + dx) as usize;
                    dst[dst_row + xx] += wt * src[src_row + s];
                }
            }
        }
    }
}

/// Output index range for which `index + offset` stays inside `[0, n)`.
#[inline]
fn valid_range(offset: isize, n: usize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset).clamp(0, n as isize) as usize;
    (lo.min(n), hi)
}

// ---------------------------------------------------------------------------
// ReLU

pub fn relu_forward(x: &Volume4D) -> Volume4D {
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Routes gradient through strictly-positive inputs only.
pub fn relu_backward(grad_out: &Volume4D, x: &Volume4D) -> Result<Volume4D, NnError> {
    if grad_out.dims() != x.dims() {
        return Err(NnError::Shape("relu gradient shape mismatch".into()));
    }
    let mut grad = grad_out.clone();
    for (g, &v) in grad.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// spatial max pooling (depth untouched)

/// `1xKxK` max pooling with stride K over the plane; the depth dimension
/// keeps its scale. Returns the pooled volume and the per-output argmax
/// (flat in-plane index) used by the backward pass. Ties break to the
/// first index in row-major order.
pub fn pool3d_1kk_forward(x: &Volume4D, kernel: usize) -> Result<(Volume4D, Vec<usize>), NnError> {
    let [c_n, d_n, h_n, w_n] = x.dims();
    if kernel == 0 || kernel > h_n || kernel > w_n {
        return Err(NnError::PoolTooLarge {
            kernel,
            height: h_n,
            width: w_n,
        });
    }
    let h_out = h_n / kernel;
    let w_out = w_n / kernel;
    let mut out = Volume4D::new(c_n, d_n, h_out, w_out, 0.0)?;
    let mut argmax = vec![0usize; c_n * d_n * h_out * w_out];
    let mut flat = 0usize;
    for c in 0..c_n {
        for d in 0..d_n {
            let src = x.plane(c, d);
            for yo in 0..h_out {
                for xo in 0..w_out {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for y in yo * kernel..yo * kernel + kernel {
                        for xx in xo * kernel..xo * kernel + kernel {
                            let idx = y * w_n + xx;
                            if src[idx] > best {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.set(c, d, yo, xo, best);
                    argmax[flat] = best_idx;
                    flat += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each pooled gradient back to its argmax location.
pub fn pool3d_1kk_backward(
    grad_out: &Volume4D,
    input_dims: [usize; 4],
    kernel: usize,
    argmax: &[usize],
) -> Result<Volume4D, NnError> {
    let [c_n, d_n, h_n, w_n] = input_dims;
    let expected = [c_n, d_n, h_n / kernel, w_n / kernel];
    if grad_out.dims() != expected || argmax.len() != grad_out.len() {
        return Err(NnError::Shape("pool gradient shape mismatch".into()));
    }
    let mut grad = Volume4D::new(c_n, d_n, h_n, w_n, 0.0)?;
    let (h_out, w_out) = (expected[2], expected[3]);
    let mut flat = 0usize;
    for c in 0..c_n {
        for d in 0..d_n {
            for yo in 0..h_out {
                for xo in 0..w_out {
                    let g = grad_out.get(c, d, yo, xo);
                    let dst = grad.plane_mut(c, d);
                    dst[argmax[flat]] += g;
                    flat += 1;
                }
            }
        }
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// per-channel normalization

/// Whether normalization uses stored running statistics or statistics of
/// the current volume (computed jointly over depth, height, and width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Inference,
    Training,
}

/// Per-channel affine normalization.
///
/// Inference mode: `y = scale * (x - running_mean) / sqrt(running_var + eps) + offset`.
/// Training mode uses the mean and biased variance of the current volume.
/// Returns the output plus the per-channel `(mean, inv_std)` actually used.
pub fn norm3d_forward(
    x: &Volume4D,
    stats: &crate::convert::NormStats,
    mode: NormMode,
) -> Result<(Volume4D, Vec<(f64, f64)>), NnError> {
    let c_n = x.channels();
    if stats.channels() != c_n {
        return Err(NnError::ChannelMismatch {
            expected: stats.channels(),
            got: c_n,
        });
    }
    let [_, d_n, h_n, w_n] = x.dims();
    let n = (d_n * h_n * w_n) as f64;
    let mut out = x.clone();
    let mut used = Vec::with_capacity(c_n);
    for c in 0..c_n {
        let (mean, inv_std) = match mode {
            NormMode::Inference => (
                stats.running_mean[c],
                1.0 / (stats.running_var[c] + NORM_EPS).sqrt(),
            ),
            NormMode::Training => {
                let mut sum = 0.0;
                let mut sq = 0.0;
                for d in 0..d_n {
                    for &v in x.plane(c, d) {
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / n;
                let var = (sq / n - mean * mean).max(0.0);
                (mean, 1.0 / (var + NORM_EPS).sqrt())
            }
        };
        used.push((mean, inv_std));
        let scale = stats.scale[c];
        let offset = stats.offset[c];
        for d in 0..d_n {
            for v in out.plane_mut(c, d) {
                *v = scale * (*v - mean) * inv_std + offset;
            }
        }
    }
    Ok((out, used))
}

/// Gradients of [`norm3d_forward`]: input gradient plus per-channel scale
/// and offset gradients.
pub fn norm3d_backward(
    grad_out: &Volume4D,
    x: &Volume4D,
    stats: &crate::convert::NormStats,
    mode: NormMode,
    used: &[(f64, f64)],
) -> Result<(Volume4D, Vec<f64>, Vec<f64>), NnError> {
    if grad_out.dims() != x.dims() {
        return Err(NnError::Shape("norm gradient shape mismatch".into()));
    }
    let [c_n, d_n, h_n, w_n] = x.dims();
    if used.len() != c_n || stats.channels() != c_n {
        return Err(NnError::ChannelMismatch {
            expected: c_n,
            got: used.len(),
        });
    }
    let n = (d_n * h_n * w_n) as f64;
    let mut grad_x = Volume4D::new(c_n, d_n, h_n, w_n, 0.0)?;
    let mut grad_scale = vec![0.0; c_n];
    let mut grad_offset = vec![0.0; c_n];
    for c in 0..c_n {
        let (mean, inv_std) = used[c];
        let scale = stats.scale[c];
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for d in 0..d_n {
            let g = grad_out.plane(c, d);
            let xs = x.plane(c, d);
            for (gi, &xi) in g.iter().zip(xs) {
                let xhat = (xi - mean) * inv_std;
                sum_g += gi;
                sum_gx += gi * xhat;
            }
        }
        grad_offset[c] = sum_g;
        grad_scale[c] = sum_gx;
        match mode {
            NormMode::Inference => {
                // Statistics are constants: the map is elementwise affine.
                for d in 0..d_n {
                    let g = grad_out.plane(c, d);
                    let dst = grad_x.plane_mut(c, d);
                    for (o, &gi) in dst.iter_mut().zip(g) {
                        *o = gi * scale * inv_std;
                    }
                }
            }
            NormMode::Training => {
                let mean_g = sum_g / n;
                let mean_gx = sum_gx / n;
                for d in 0..d_n {
                    let g = grad_out.plane(c, d);
                    let xs = x.plane(c, d);
                    let base = grad_x.plane_mut(c, d);
                    for ((o, &gi), &xi) in base.iter_mut().zip(g).zip(xs) {
                        let xhat = (xi - mean) * inv_std;
                        *o = scale * inv_std * (gi - mean_g - xhat * mean_gx);
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_scale, grad_offset))
}

// ---------------------------------------------------------------------------
// depth squeeze

/// `out x in x D` weights of the depth-collapsing `Dx1x1` convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeWeights {
    pub out_channels: usize,
    pub in_channels: usize,
    pub depth: usize,
    pub data: Vec<f64>,
}

impl SqueezeWeights {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        depth: usize,
        data: Vec<f64>,
    ) -> Result<Self, NnError> {
        if data.len() != out_channels * in_channels * depth || data.is_empty() {
            return Err(NnError::Shape(format!(
                "squeeze weights length {} != {out_channels}x{in_channels}x{depth}",
                data.len()
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            depth,
            data,
        })
    }

    #[inline]
    fn at(&self, o: usize, i: usize, d: usize) -> f64 {
        self.data[(o * self.in_channels + i) * self.depth + d]
    }
}

/// Collapses the depth axis with a `Dx1x1` convolution and drops the
/// resulting singleton dimension: `out[o] = sum_i sum_d w[o, i, d] * x[i, d]`.
pub fn depth_squeeze(x: &Volume4D, w: &SqueezeWeights) -> Result<Feature3, NnError> {
    let [c_n, d_n, h_n, w_n] = x.dims();
    if w.depth != d_n {
        return Err(NnError::DepthMismatch {
            expected: w.depth,
            got: d_n,
        });
    }
    if w.in_channels != c_n {
        return Err(NnError::ChannelMismatch {
            expected: w.in_channels,
            got: c_n,
        });
    }
    let mut out = Feature3::new(w.out_channels, h_n, w_n, 0.0);
    let hw = h_n * w_n;
    for o in 0..w.out_channels {
        let dst = &mut out.as_mut_slice()[o * hw..(o + 1) * hw];
        for i in 0..c_n {
            for d in 0..d_n {
                let wt = w.at(o, i, d);
                for (acc, &v) in dst.iter_mut().zip(x.plane(i, d)) {
                    *acc += wt * v;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`depth_squeeze`] with respect to input and weights.
pub fn depth_squeeze_backward(
    grad_out: &Feature3,
    x: &Volume4D,
    w: &SqueezeWeights,
) -> Result<(Volume4D, Vec<f64>), NnError> {
    let [c_n, d_n, h_n, w_n] = x.dims();
    if grad_out.channels() != w.out_channels
        || grad_out.height() != h_n
        || grad_out.width() != w_n
    {
        return Err(NnError::Shape("squeeze gradient shape mismatch".into()));
    }
    let mut grad_x = Volume4D::new(c_n, d_n, h_n, w_n, 0.0)?;
    let mut grad_w = vec![0.0; w.data.len()];
    for o in 0..w.out_channels {
        let g = grad_out.plane(o);
        for i in 0..c_n {
            for d in 0..d_n {
                let wt = w.at(o, i, d);
                let widx = (o * c_n + i) * d_n + d;
                let mut acc = 0.0;
                let dst = grad_x.plane_mut(i, d);
                let src = x.plane(i, d);
                // x is borrowed immutably and grad_x mutably; both plane
                // calls are on different objects so this is fine.
                for ((gx, &gi), &xi) in dst.iter_mut().zip(g).zip(src) {
                    *gx += wt * gi;
                    acc += gi * xi;
                }
                grad_w[widx] += acc;
            }
        }
    }
    Ok((grad_x, grad_w))
}

// ---------------------------------------------------------------------------
// linear head

/// Per-pixel linear mix of channels: `out[h, w] = sum_c w[c] * x[c, h, w] + b`,
/// flattened row-major into a prediction vector of length `H * W`.
pub fn linear_head_forward(x: &Feature3, weights: &[f64], bias: f64) -> Result<Vec<f64>, NnError> {
    if weights.len() != x.channels() {
        return Err(NnError::ChannelMismatch {
            expected: weights.len(),
            got: x.channels(),
        });
    }
    let hw = x.height() * x.width();
    let mut out = vec![bias; hw];
    for (c, &wc) in weights.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(x.plane(c)) {
            *o += wc * v;
        }
    }
    Ok(out)
}

/// Gradients of [`linear_head_forward`].
pub fn linear_head_backward(
    grad_out: &[f64],
    x: &Feature3,
    weights: &[f64],
) -> Result<(Feature3, Vec<f64>, f64), NnError> {
    let hw = x.height() * x.width();
    if grad_out.len() != hw || weights.len() != x.channels() {
        return Err(NnError::Shape("head gradient shape mismatch".into()));
    }
    let mut grad_x = Feature3::new(x.channels(), x.height(), x.width(), 0.0);
    let mut grad_w = vec![0.0; weights.len()];
    let grad_b = grad_out.iter().sum();
    for c in 0..x.channels() {
        let wc = weights[c];
        let src = x.plane(c);
        let dst = &mut grad_x.as_mut_slice()[c * hw..(c + 1) * hw];
        let mut acc = 0.0;
        for ((gx, &g), &xi) in dst.iter_mut().zip(grad_out).zip(src) {
            *gx = wc * g;
            acc += g * xi;
        }
        grad_w[c] = acc;
    }
    Ok((grad_x, grad_w, grad_b))
}

// ---------------------------------------------------------------------------
// loss

/// Numerically stable binary cross-entropy on logits, averaged over
/// elements, with a multiplier on the positive class. Returns the loss and
/// its gradient with respect to the logits.
pub fn bce_with_logits(
    logits: &[f64],
    targets: &[f64],
    pos_weight: f64,
) -> Result<(f64, Vec<f64>), NnError> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(NnError::Shape(format!(
            "loss over {} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(targets) {
        // softplus(z) = max(z, 0) + ln(1 + exp(-|z|))
        let softplus_pos = z.max(0.0) + (-z.abs()).exp().ln_1p();
        let softplus_neg = softplus_pos - z; // softplus(-z)
        loss += pos_weight * y * softplus_neg + (1.0 - y) * softplus_pos;
        let sig = 1.0 / (1.0 + (-z).exp());
        grad.push((pos_weight * y * (sig - 1.0) + (1.0 - y) * sig) / n);
    }
    Ok((loss / n, grad))
}

// ---------------------------------------------------------------------------
// stateful wrappers

/// Depth-1 3D convolution with owned parameters and gradient accumulators.
#[derive(Debug, Clone)]
pub struct Conv3dOp {
    pub weights: ConvWeights3d,
    pub bias: Vec<f64>,
    pub grad_weights: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cached_input: Option<Volume4D>,
}

impl Conv3dOp {
    pub fn new(weights: ConvWeights3d, bias: Vec<f64>) -> Result<Self, NnError> {
        if bias.len() != weights.out_channels {
            return Err(NnError::BiasLength {
                expected: weights.out_channels,
                got: bias.len(),
            });
        }
        let nw = weights.data.len();
        let nb = bias.len();
        Ok(Self {
            weights,
            bias,
            grad_weights: vec![0.0; nw],
            grad_bias: vec![0.0; nb],
            cached_input: None,
        })
    }

    pub fn forward(&mut self, x: &Volume4D) -> Result<Volume4D, NnError> {
        let out = conv3d_1kk_forward(x, &self.weights, &self.bias)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Volume4D) -> Result<Volume4D, NnError> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward)?;
        let (grad_x, gw, gb) = conv3d_1kk_backward(grad_out, x, &self.weights)?;
        for (a, g) in self.grad_weights.iter_mut().zip(&gw) {
            *a += g;
        }
        for (a, g) in self.grad_bias.iter_mut().zip(&gb) {
            *a += g;
        }
        Ok(grad_x)
    }
}

/// ReLU with a cached input for the backward mask.
#[derive(Debug, Clone, Default)]
pub struct ReluOp {
    cached_input: Option<Volume4D>,
}

impl ReluOp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Volume4D) -> Result<Volume4D, NnError> {
        self.cached_input = Some(x.clone());
        Ok(relu_forward(x))
    }

    pub fn backward(&mut self, grad_out: &Volume4D) -> Result<Volume4D, NnError> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward)?;
        relu_backward(grad_out, x)
    }
}

/// Spatial max pool with cached argmax routing.
#[derive(Debug, Clone)]
pub struct Pool3dOp {
    pub kernel: usize,
    cache: Option<([usize; 4], Vec<usize>)>,
}

impl Pool3dOp {
    pub fn new(kernel: usize) -> Self {
        Self { kernel, cache: None }
    }

    pub fn forward(&mut self, x: &Volume4D) -> Result<Volume4D, NnError> {
        let (out, argmax) = pool3d_1kk_forward(x, self.kernel)?;
        self.cache = Some((x.dims(), argmax));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Volume4D) -> Result<Volume4D, NnError> {
        let (dims, argmax) = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward)?;
        pool3d_1kk_backward(grad_out, *dims, self.kernel, argmax)
    }
}

/// Per-channel normalization with owned statistics.
#[derive(Debug, Clone)]
pub struct Norm3dOp {
    pub stats: crate::convert::NormStats,
    pub mode: NormMode,
    pub grad_scale: Vec<f64>,
    pub grad_offset: Vec<f64>,
    cache: Option<(Volume4D, Vec<(f64, f64)>)>,
}

impl Norm3dOp {
    pub fn new(stats: crate::convert::NormStats, mode: NormMode) -> Self {
        let c = stats.channels();
        Self {
            stats,
            mode,
            grad_scale: vec![0.0; c],
            grad_offset: vec![0.0; c],
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Volume4D) -> Result<Volume4D, NnError> {
        let (out, used) = norm3d_forward(x, &self.stats, self.mode)?;
        self.cache = Some((x.clone(), used));
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Volume4D) -> Result<Volume4D, NnError> {
        let (x, used) = self.cache.as_ref().ok_or(NnError::BackwardBeforeForward)?;
        let (grad_x, gs, go) = norm3d_backward(grad_out, x, &self.stats, self.mode, used)?;
        for (a, g) in self.grad_scale.iter_mut().zip(&gs) {
            *a += g;
        }
        for (a, g) in self.grad_offset.iter_mut().zip(&go) {
            *a += g;
        }
        Ok(grad_x)
    }
}

/// Depth squeeze with owned weights.
#[derive(Debug, Clone)]
pub struct DepthSqueezeOp {
    pub weights: SqueezeWeights,
    pub grad_weights: Vec<f64>,
    cached_input: Option<Volume4D>,
}

impl DepthSqueezeOp {
    pub fn new(weights: SqueezeWeights) -> Self {
        let n = weights.data.len();
        Self {
            weights,
            grad_weights: vec![0.0; n],
            cached_input: None,
        }
    }

    pub fn forward(&mut self, x: &Volume4D) -> Result<Feature3, NnError> {
        let out = depth_squeeze(x, &self.weights)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Feature3) -> Result<Volume4D, NnError> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward)?;
        let (grad_x, gw) = depth_squeeze_backward(grad_out, x, &self.weights)?;
        for (a, g) in self.grad_weights.iter_mut().zip(&gw) {
            *a += g;
        }
        Ok(grad_x)
    }
}

/// Per-pixel linear head with owned weights.
#[derive(Debug, Clone)]
pub struct LinearHeadOp {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub grad_weights: Vec<f64>,
    pub grad_bias: f64,
    cached_input: Option<Feature3>,
}

impl LinearHeadOp {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        let n = weights.len();
        Self {
            weights,
            bias,
            grad_weights: vec![0.0; n],
            grad_bias: 0.0,
            cached_input: None,
        }
    }

    pub fn forward(&mut self, x: &Feature3) -> Result<Vec<f64>, NnError> {
        let out = linear_head_forward(x, &self.weights, self.bias)?;
        self.cached_input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &[f64]) -> Result<Feature3, NnError> {
        let x = self
            .cached_input
            .as_ref()
            .ok_or(NnError::BackwardBeforeForward)?;
        let (grad_x, gw, gb) = linear_head_backward(grad_out, x, &self.weights)?;
        for (a, g) in self.grad_weights.iter_mut().zip(&gw) {
            *a += g;
        }
        self.grad_bias += gb;
        Ok(grad_x)
    }
}
