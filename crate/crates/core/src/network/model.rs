use super::layers::{
    batchnorm_backward, batchnorm_forward, conv2d_valid, conv2d_valid_backward, linear_head, linear_head_backward,
    BnStats, HeadCache, MapShape,
};
use super::{NetworkError, Tensor};
use crate::encoder::{cbaa_filter_grad, cbaa_side_len, cbaa_with, encode_window, EncodedWindow, Universe};
use crate::exec::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
/// Samples per gradient partial sum. Fixed so that the reduction order does
/// not depend on the thread count.
const CHUNK: usize = 16;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hyper {
    /// Window size `W`.
    pub window: usize,
    /// CBAA filter size `v`.
    pub cbaa_size: usize,
    /// CBAA dilation `d`.
    pub dilation: usize,
    pub independent_sides: bool,
    /// Number of sequential stages `L`.
    pub stages: usize,
    /// Horizontal kernel width `H`.
    pub kernel_h: usize,
    /// Vertical kernel height `V`.
    pub kernel_v: usize,
    /// Lifting factor `OUT`; every stage has `OUT` output channels.
    pub out_factor: usize,
    pub hidden: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            window: 12,
            cbaa_size: 2,
            dilation: 1,
            independent_sides: false,
            stages: 2,
            kernel_h: 3,
            kernel_v: 2,
            out_factor: 4,
            hidden: 64,
        }
    }
}

/// Extents derived from a [`Hyper`] and the universe it encodes against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dims {
    pub encoded_width: usize,
    pub feature_width: usize,
    /// Input shape of every convolution in application order, followed by
    /// the final map.
    pub maps: Vec<MapShape>,
    pub flat: usize,
}

impl Hyper {
    pub fn validate(&self) -> Result<(), NetworkError> {
        let fields = [
            ("window", self.window),
            ("cbaa_size", self.cbaa_size),
            ("dilation", self.dilation),
            ("stages", self.stages),
            ("kernel_h", self.kernel_h),
            ("kernel_v", self.kernel_v),
            ("out_factor", self.out_factor),
            ("hidden", self.hidden),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(NetworkError::Hyper(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    pub fn dims(&self, u: &Universe) -> Result<Dims, NetworkError> {
        self.validate()?;
        let encoded_width = u.encoded_width();
        let lc = cbaa_side_len(encoded_width, self.cbaa_size, self.dilation)?;
        let feature_width = 2 * lc + 1;
        let mut shape = MapShape { channels: 1, rows: self.window, cols: feature_width };
        let mut maps = vec![shape];
        for stage in 1..=self.stages {
            if shape.cols < self.kernel_h {
                return Err(NetworkError::Shape(format!(
                    "stage {stage}: feature map width {} smaller than horizontal kernel {}",
                    shape.cols, self.kernel_h
                )));
            }
            shape = MapShape { channels: self.out_factor, rows: shape.rows, cols: shape.cols - self.kernel_h + 1 };
            maps.push(shape);
            if shape.rows < self.kernel_v {
                return Err(NetworkError::Shape(format!(
                    "stage {stage}: feature map height {} smaller than vertical kernel {}",
                    shape.rows, self.kernel_v
                )));
            }
            shape = MapShape { channels: self.out_factor, rows: shape.rows - self.kernel_v + 1, cols: shape.cols };
            maps.push(shape);
        }
        Ok(Dims { encoded_width, feature_width, flat: shape.len(), maps })
    }
}

/// Every learnable array. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[1, v]` when the directions share a filter, `[2, v]` (left, right)
    /// otherwise.
    pub cbaa: Tensor,
    pub bn_gamma: Tensor,
    pub bn_delta: Tensor,
    /// `[OUT, C_in, 1, H]` per stage.
    pub horizontal: Vec<Tensor>,
    /// `[OUT, OUT, V, 1]` per stage.
    pub vertical: Vec<Tensor>,
    pub lin1_w: Tensor,
    pub lin1_b: Tensor,
    pub lin2_w: Tensor,
    pub lin2_b: Tensor,
}

impl Params {
    pub fn zeros(h: &Hyper, dims: &Dims) -> Params {
        let sides = if h.independent_sides { 2 } else { 1 };
        let x = h.out_factor;
        Params {
            cbaa: Tensor::zeros(&[sides, h.cbaa_size]),
            bn_gamma: Tensor::zeros(&[1]),
            bn_delta: Tensor::zeros(&[1]),
            horizontal: (0..h.stages)
                .map(|i| Tensor::zeros(&[x, if i == 0 { 1 } else { x }, 1, h.kernel_h]))
                .collect(),
            vertical: (0..h.stages).map(|_| Tensor::zeros(&[x, x, h.kernel_v, 1])).collect(),
            lin1_w: Tensor::zeros(&[h.hidden, dims.flat]),
            lin1_b: Tensor::zeros(&[h.hidden]),
            lin2_w: Tensor::zeros(&[1, h.hidden]),
            lin2_b: Tensor::zeros(&[1]),
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["cbaa_filter".to_string(), "bn_gamma".into(), "bn_delta".into()];
        for i in 0..self.horizontal.len() {
            names.push(format!("stage{}.horizontal", i + 1));
            names.push(format!("stage{}.vertical", i + 1));
        }
        names.extend(["lin1.weight", "lin1.bias", "lin2.weight", "lin2.bias"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.cbaa, &self.bn_gamma, &self.bn_delta];
        for (h, v) in self.horizontal.iter().zip(&self.vertical) {
            out.push(h);
            out.push(v);
        }
        out.extend([&self.lin1_w, &self.lin1_b, &self.lin2_w, &self.lin2_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.cbaa, &mut self.bn_gamma, &mut self.bn_delta];
        for (h, v) in self.horizontal.iter_mut().zip(self.vertical.iter_mut()) {
            out.push(h);
            out.push(v);
        }
        out.extend([&mut self.lin1_w, &mut self.lin1_b, &mut self.lin2_w, &mut self.lin2_b]);
        out
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.scale(k);
        }
    }

    pub fn left_filter(&self) -> &[f64] {
        let v = self.cbaa.shape()[1];
        &self.cbaa.data()[..v]
    }

    pub fn right_filter(&self) -> &[f64] {
        let v = self.cbaa.shape()[1];
        let n = self.cbaa.len();
        &self.cbaa.data()[n - v..]
    }
}

/// A trained or freshly initialised forecaster network.
///
/// Outputs are in scaled units; multiply by `target_scale` for differences.
#[derive(Debug, Clone, PartialEq)]
pub struct SacModel {
    pub hyper: Hyper,
    pub universe: Universe,
    pub dims: Dims,
    pub target_scale: f64,
    pub params: Params,
    pub running_mean: f64,
    pub running_var: f64,
}

/// Per-window intermediates of the stages after batchnorm.
#[derive(Debug, Clone)]
struct SampleCache {
    /// Input of every convolution, in application order.
    maps: Vec<Vec<f64>>,
    flat: Vec<f64>,
    head: HeadCache,
}

impl SacModel {
    /// Seeded fan-in uniform initialisation; `output_bias` seeds `b′`.
    pub fn new(
        hyper: Hyper,
        universe: Universe,
        target_scale: f64,
        output_bias: f64,
        seed: u64,
    ) -> Result<SacModel, NetworkError> {
        let dims = hyper.dims(&universe)?;
        let mut params = Params::zeros(&hyper, &dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        params.cbaa.data_mut().fill(1.0 / hyper.cbaa_size as f64);
        params.bn_gamma.data_mut()[0] = 1.0;
        let mut fill = |t: &mut Tensor, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in t.data_mut() {
                *w = rng.gen_range(-bound..bound);
            }
        };
        for (h, v) in params.horizontal.iter_mut().zip(params.vertical.iter_mut()) {
            let fan_h = h.shape()[1] * hyper.kernel_h;
            fill(h, fan_h);
            fill(v, hyper.out_factor * hyper.kernel_v);
        }
        fill(&mut params.lin1_w, dims.flat);
        fill(&mut params.lin1_b, dims.flat);
        fill(&mut params.lin2_w, hyper.hidden);
        params.lin2_b.data_mut()[0] = output_bias;
        Ok(SacModel { hyper, universe, dims, target_scale, params, running_mean: 0.0, running_var: 1.0 })
    }

    /// Assembles a model from stored parts, checking every extent.
    pub fn from_parts(
        hyper: Hyper,
        universe: Universe,
        target_scale: f64,
        params: Params,
        running_mean: f64,
        running_var: f64,
    ) -> Result<SacModel, NetworkError> {
        let dims = hyper.dims(&universe)?;
        let expected = Params::zeros(&hyper, &dims);
        for ((name, want), got) in expected.names().iter().zip(expected.tensors()).zip(params.tensors()) {
            if want.shape() != got.shape() {
                return Err(NetworkError::Shape(format!(
                    "{name}: expected {:?}, got {:?}",
                    want.shape(),
                    got.shape()
                )));
            }
        }
        if params.horizontal.len() != hyper.stages || params.vertical.len() != hyper.stages {
            return Err(NetworkError::Shape(format!("expected {} stages", hyper.stages)));
        }
        Ok(SacModel { hyper, universe, dims, target_scale, params, running_mean, running_var })
    }

    pub fn encode(&self, diffs: &[f64]) -> Result<EncodedWindow, NetworkError> {
        if diffs.len() != self.hyper.window {
            return Err(NetworkError::Shape(format!(
                "window of {} differences, model expects {}",
                diffs.len(),
                self.hyper.window
            )));
        }
        Ok(encode_window(diffs, &self.universe))
    }

    fn features(&self, enc: &EncodedWindow) -> Result<Vec<f64>, NetworkError> {
        let p = &self.params;
        Ok(cbaa_with(enc, p.left_filter(), p.right_filter(), self.hyper.dilation)?.data)
    }

    fn sac_head_forward(&self, y: &[f64]) -> Result<(f64, SampleCache), NetworkError> {
        let p = &self.params;
        let mut maps = Vec::with_capacity(2 * self.hyper.stages);
        let mut cur = y.to_vec();
        let mut shape = self.dims.maps[0];
        for (h, v) in p.horizontal.iter().zip(&p.vertical) {
            for bank in [h, v] {
                let (next, s) = conv2d_valid(&cur, shape, bank)?;
                maps.push(std::mem::replace(&mut cur, next));
                shape = s;
            }
        }
        let (q, head) = linear_head(&cur, &p.lin1_w, &p.lin1_b, &p.lin2_w, &p.lin2_b)?;
        Ok((q, SampleCache { maps, flat: cur, head }))
    }

    /// Accumulates stage and head gradients for one window; returns the
    /// gradient with respect to the batchnorm output.
    fn sac_head_backward(&self, cache: &SampleCache, dq: f64, g: &mut Params) -> Vec<f64> {
        let p = &self.params;
        let mut up = linear_head_backward(
            &cache.flat,
            &cache.head,
            &p.lin1_w,
            &p.lin2_w,
            dq,
            &mut g.lin1_w,
            &mut g.lin1_b,
            &mut g.lin2_w,
            &mut g.lin2_b,
        );
        for k in (0..2 * self.hyper.stages).rev() {
            let (stage, vertical) = (k / 2, k % 2 == 1);
            let (bank, grad) = if vertical {
                (&p.vertical[stage], &mut g.vertical[stage])
            } else {
                (&p.horizontal[stage], &mut g.horizontal[stage])
            };
            up = conv2d_valid_backward(&cache.maps[k], self.dims.maps[k], bank, &up, grad);
        }
        up
    }

    /// Eval-mode output for one window, in scaled units.
    pub fn predict_scaled(&self, diffs: &[f64]) -> Result<f64, NetworkError> {
        let enc = self.encode(diffs)?;
        let mut x = self.features(&enc)?;
        let inv = 1.0 / (self.running_var + BN_EPS).sqrt();
        let (gamma, delta) = (self.params.bn_gamma.data()[0], self.params.bn_delta.data()[0]);
        for v in &mut x {
            *v = (*v - self.running_mean) * inv * gamma + delta;
        }
        Ok(self.sac_head_forward(&x)?.0)
    }

    /// Eval-mode predicted next difference.
    pub fn predict(&self, diffs: &[f64]) -> Result<f64, NetworkError> {
        Ok(self.predict_scaled(diffs)? * self.target_scale)
    }

    pub fn predict_batch(&self, windows: &[&[f64]], exec: Execution) -> Result<Vec<f64>, NetworkError> {
        exec.try_map(windows, |w| self.predict(w))
    }

    /// Folds a training batch's statistics into the eval-mode running
    /// statistics (unbiased variance).
    pub fn update_running_stats(&mut self, stats: &BnStats) {
        let n = stats.count as f64;
        let unbiased = if stats.count > 1 { stats.var[0] * n / (n - 1.0) } else { stats.var[0] };
        self.running_mean = (1.0 - BN_MOMENTUM) * self.running_mean + BN_MOMENTUM * stats.mean[0];
        self.running_var = (1.0 - BN_MOMENTUM) * self.running_var + BN_MOMENTUM * unbiased;
    }

    pub fn parameter_count(&self) -> usize {
        self.params.tensors().iter().map(|t| t.len()).sum()
    }
}

struct BatchCache {
    encoded: Vec<EncodedWindow>,
    bn_input: Tensor,
    stats: BnStats,
    samples: Vec<SampleCache>,
}

/// One training-mode forward/backward over a batch of windows.
pub struct BatchPass<'m> {
    model: &'m SacModel,
    exec: Execution,
    cache: Option<BatchCache>,
}

impl<'m> BatchPass<'m> {
    pub fn new(model: &'m SacModel, exec: Execution) -> BatchPass<'m> {
        BatchPass { model, exec, cache: None }
    }

    /// Training-mode outputs (batch statistics), in scaled units.
    pub fn forward(&mut self, windows: &[&[f64]]) -> Result<Vec<f64>, NetworkError> {
        if windows.is_empty() {
            return Err(NetworkError::EmptyBatch);
        }
        let m = self.model;
        let encoded = self.exec.try_map(windows, |w| m.encode(w))?;
        let feats = self.exec.try_map(&encoded, |e| m.features(e))?;
        let shape0 = m.dims.maps[0];
        let bn_input = Tensor::from_vec(&[windows.len(), 1, shape0.rows, shape0.cols], feats.concat())?;
        let (y, stats) = batchnorm_forward(&bn_input, m.params.bn_gamma.data(), m.params.bn_delta.data(), BN_EPS)?;
        let per = shape0.len();
        let outs: Vec<_> = self
            .exec
            .map_range(windows.len(), |b| m.sac_head_forward(&y.data()[b * per..(b + 1) * per]))
            .into_iter()
            .collect::<Result<_, _>>()?;
        let (qs, samples): (Vec<f64>, Vec<SampleCache>) = outs.into_iter().unzip();
        self.cache = Some(BatchCache { encoded, bn_input, stats, samples });
        Ok(qs)
    }

    pub fn batch_stats(&self) -> Option<&BnStats> {
        self.cache.as_ref().map(|c| &c.stats)
    }

    /// Gradients of `Σ dq_b · q_b` with respect to every parameter.
    pub fn backward(&self, dq: &[f64]) -> Result<Params, NetworkError> {
        let cache = self.cache.as_ref().ok_or(NetworkError::State)?;
        let m = self.model;
        let b = cache.samples.len();
        if dq.len() != b {
            return Err(NetworkError::Shape(format!("{} upstream gradients for a batch of {b}", dq.len())));
        }
        let chunks = b.div_ceil(CHUNK);
        let partials = self.exec.map_range(chunks, |c| {
            let mut g = Params::zeros(&m.hyper, &m.dims);
            let mut dys = Vec::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(b) {
                dys.extend(m.sac_head_backward(&cache.samples[i], dq[i], &mut g));
            }
            (g, dys)
        });
        let mut grads = Params::zeros(&m.hyper, &m.dims);
        let mut dy = Vec::with_capacity(cache.bn_input.len());
        for (g, d) in partials {
            grads.add_assign(&g);
            dy.extend(d);
        }
        let dy = Tensor::from_vec(cache.bn_input.shape(), dy)?;
        let (dx, dgamma, ddelta) =
            batchnorm_backward(&cache.bn_input, &dy, &cache.stats, m.params.bn_gamma.data(), BN_EPS);
        grads.bn_gamma.data_mut()[0] += dgamma[0];
        grads.bn_delta.data_mut()[0] += ddelta[0];

        let v = m.hyper.cbaa_size;
        let per = m.dims.maps[0].len();
        let filter_partials = self.exec.map_range(chunks, |c| {
            let (mut gl, mut gr) = (vec![0.0; v], vec![0.0; v]);
            for i in c * CHUNK..((c + 1) * CHUNK).min(b) {
                let up = &dx.data()[i * per..(i + 1) * per];
                cbaa_filter_grad(&cache.encoded[i], up, v, m.hyper.dilation, &mut gl, &mut gr);
            }
            (gl, gr)
        });
        let gc = grads.cbaa.data_mut();
        for (gl, gr) in filter_partials {
            if m.hyper.independent_sides {
                for k in 0..v {
                    gc[k] += gl[k];
                    gc[v + k] += gr[k];
                }
            } else {
                for k in 0..v {
                    gc[k] += gl[k] + gr[k];
                }
            }
        }
        Ok(grads)
    }
}
