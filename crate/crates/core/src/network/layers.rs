//! Layer kernels with their adjoints: batch normalisation, valid 2-D
//! cross-correlation (used for both halves of a semi-asymmetric stage), the
//! two-layer linear head and the L1 loss.

use super::{NetworkError, Tensor};

/// Cached statistics of a training-mode batchnorm pass, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    /// Population variance used for normalisation.
    pub var: Vec<f64>,
    /// Number of elements each channel's statistics were taken over.
    pub count: usize,
}

/// Training-mode batchnorm over a `[B, C, H, W]` tensor: statistics are taken
/// over batch and spatial dimensions, per channel.
pub fn batchnorm_forward(
    x: &Tensor,
    gamma: &[f64],
    delta: &[f64],
    eps: f64,
) -> Result<(Tensor, BnStats), NetworkError> {
    let shape = x.shape();
    if shape.len() != 4 {
        return Err(NetworkError::Shape(format!("batchnorm expects [B, C, H, W], got {shape:?}")));
    }
    let (b, c) = (shape[0], shape[1]);
    if b == 0 {
        return Err(NetworkError::EmptyBatch);
    }
    if gamma.len() != c || delta.len() != c {
        return Err(NetworkError::Shape(format!("{c} channels but {} / {} affine parameters", gamma.len(), delta.len())));
    }
    let sp = shape[2] * shape[3];
    let count = b * sp;
    let data = x.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for bi in 0..b {
            s += data[(bi * c + ch) * sp..(bi * c + ch + 1) * sp].iter().sum::<f64>();
        }
        let m = s / count as f64;
        let mut v = 0.0;
        for bi in 0..b {
            v += data[(bi * c + ch) * sp..(bi * c + ch + 1) * sp]
                .iter()
                .map(|x| (x - m) * (x - m))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = v / count as f64;
    }
    let mut out = x.zeros_like();
    let od = out.data_mut();
    for bi in 0..b {
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + eps).sqrt();
            let base = (bi * c + ch) * sp;
            for s in 0..sp {
                od[base + s] = (data[base + s] - mean[ch]) * inv * gamma[ch] + delta[ch];
            }
        }
    }
    Ok((out, BnStats { mean, var, count }))
}

/// Backward of [`batchnorm_forward`] in training mode.
/// Returns `(dx, dgamma, ddelta)`.
pub fn batchnorm_backward(
    x: &Tensor,
    dy: &Tensor,
    stats: &BnStats,
    gamma: &[f64],
    eps: f64,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let shape = x.shape();
    let (b, c) = (shape[0], shape[1]);
    let sp = shape[2] * shape[3];
    let n = stats.count as f64;
    let (xd, gd) = (x.data(), dy.data());
    let mut dgamma = vec![0.0; c];
    let mut ddelta = vec![0.0; c];
    let mut dx = x.zeros_like();
    for ch in 0..c {
        let inv = 1.0 / (stats.var[ch] + eps).sqrt();
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for bi in 0..b {
            let base = (bi * c + ch) * sp;
            for s in 0..sp {
                let xhat = (xd[base + s] - stats.mean[ch]) * inv;
                sum_dy += gd[base + s];
                sum_dy_xhat += gd[base + s] * xhat;
            }
        }
        dgamma[ch] = sum_dy_xhat;
        ddelta[ch] = sum_dy;
        let k = gamma[ch] * inv / n;
        let dxd = dx.data_mut();
        for bi in 0..b {
            let base = (bi * c + ch) * sp;
            for s in 0..sp {
                let xhat = (xd[base + s] - stats.mean[ch]) * inv;
                dxd[base + s] = k * (n * gd[base + s] - sum_dy - xhat * sum_dy_xhat);
            }
        }
    }
    (dx, dgamma, ddelta)
}

/// Shape of a single-sample feature map `[channels, rows, cols]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapShape {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl MapShape {
    pub fn len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Valid, stride-1 cross-correlation of a `[Ci, H, W]` map with a
/// `[Co, Ci, kh, kw]` bank.
pub fn conv2d_valid(input: &[f64], shape: MapShape, weight: &Tensor) -> Result<(Vec<f64>, MapShape), NetworkError> {
    let ws = weight.shape();
    let (co, ci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    if ci != shape.channels {
        return Err(NetworkError::Shape(format!("bank expects {ci} input channels, map has {}", shape.channels)));
    }
    if shape.rows < kh || shape.cols < kw {
        return Err(NetworkError::Shape(format!(
            "feature map {}×{} smaller than kernel {kh}×{kw}",
            shape.rows, shape.cols
        )));
    }
    let out_shape = MapShape { channels: co, rows: shape.rows - kh + 1, cols: shape.cols - kw + 1 };
    let w = weight.data();
    let mut out = vec![0.0; out_shape.len()];
    for o in 0..co {
        for c in 0..ci {
            for p in 0..kh {
                for q in 0..kw {
                    let wv = w[((o * ci + c) * kh + p) * kw + q];
                    if wv == 0.0 {
                        continue;
                    }
                    for i in 0..out_shape.rows {
                        let src = &input[(c * shape.rows + i + p) * shape.cols + q..][..out_shape.cols];
                        let dst = &mut out[(o * out_shape.rows + i) * out_shape.cols..][..out_shape.cols];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Ok((out, out_shape))
}

/// Adjoint of [`conv2d_valid`]: accumulates the weight gradient into
/// `grad_weight` and returns the input gradient.
pub fn conv2d_valid_backward(
    input: &[f64],
    shape: MapShape,
    weight: &Tensor,
    upstream: &[f64],
    grad_weight: &mut Tensor,
) -> Vec<f64> {
    let ws = weight.shape();
    let (co, ci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
    let (orows, ocols) = (shape.rows - kh + 1, shape.cols - kw + 1);
    let w = weight.data();
    let gw = grad_weight.data_mut();
    let mut dx = vec![0.0; shape.len()];
    for o in 0..co {
        for c in 0..ci {
            for p in 0..kh {
                for q in 0..kw {
                    let widx = ((o * ci + c) * kh + p) * kw + q;
                    let wv = w[widx];
                    let mut acc = 0.0;
                    for i in 0..orows {
                        let up = &upstream[(o * orows + i) * ocols..][..ocols];
                        let off = (c * shape.rows + i + p) * shape.cols + q;
                        let src = &input[off..][..ocols];
                        acc += up.iter().zip(src).map(|(u, s)| u * s).sum::<f64>();
                        let dst = &mut dx[off..][..ocols];
                        for (d, u) in dst.iter_mut().zip(up) {
                            *d += wv * u;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    dx
}

/// Activations of the two-layer head for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadCache {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// `q = A'·relu(A·x + b) + b'`.
pub fn linear_head(
    x: &[f64],
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
) -> Result<(f64, HeadCache), NetworkError> {
    let (hid, din) = (w1.shape()[0], w1.shape()[1]);
    if x.len() != din {
        return Err(NetworkError::Shape(format!("head expects {din} inputs, got {}", x.len())));
    }
    let w = w1.data();
    let mut pre = b1.data().to_vec();
    for (k, p) in pre.iter_mut().enumerate() {
        *p += w[k * din..(k + 1) * din].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let q = b2.data()[0] + w2.data()[..hid].iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>();
    Ok((q, HeadCache { pre, hidden }))
}

/// Adjoint of [`linear_head`] for upstream `dq`; accumulates parameter
/// gradients and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn linear_head_backward(
    x: &[f64],
    cache: &HeadCache,
    w1: &Tensor,
    w2: &Tensor,
    dq: f64,
    g_w1: &mut Tensor,
    g_b1: &mut Tensor,
    g_w2: &mut Tensor,
    g_b2: &mut Tensor,
) -> Vec<f64> {
    let (hid, din) = (w1.shape()[0], w1.shape()[1]);
    g_b2.data_mut()[0] += dq;
    let w2d = w2.data();
    let mut dx = vec![0.0; din];
    let (gw1, gb1, gw2) = (g_w1.data_mut(), g_b1.data_mut(), g_w2.data_mut());
    let w1d = w1.data();
    for k in 0..hid {
        gw2[k] += dq * cache.hidden[k];
        // relu'(0) = 0
        if cache.pre[k] <= 0.0 {
            continue;
        }
        let dz = dq * w2d[k];
        gb1[k] += dz;
        let row = &mut gw1[k * din..(k + 1) * din];
        for (g, xi) in row.iter_mut().zip(x) {
            *g += dz * xi;
        }
        for (d, w) in dx.iter_mut().zip(&w1d[k * din..(k + 1) * din]) {
            *d += dz * w;
        }
    }
    dx
}

/// Mean absolute error and its subgradient (0 at exact ties).
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), NetworkError> {
    if pred.len() != target.len() {
        return Err(NetworkError::Shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(NetworkError::EmptyBatch);
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, grad))
}
