//! Training loop and the trained forecaster.
//!
//! One model is fit per dataset on the pooled windows of every training
//! series. The universe of discourse is built from the pooled training
//! differences. Targets are divided by their root mean square so the loss is
//! scale-free; the divisor is stored with the model.

use crate::encoder::{EncoderError, Universe};
use crate::exec::Execution;
use crate::ingest::TimeSeries;
use crate::network::{layers::l1_loss, BatchPass, Hyper, NAdam, NetworkError, PlateauScheduler, SacModel};
use crate::pipeline::{difference_values, forecast_recursive, DiffPredictor, PipelineError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("no series is long enough to yield a training window of size {window}")]
    EmptyTrainingSet { window: usize },
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub plateau_threshold: f64,
    pub plateau_eps: f64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 256,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            plateau_factor: 0.5,
            plateau_patience: 5,
            plateau_threshold: 1e-5,
            plateau_eps: 1e-5,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean L1 over all training windows, in scaled units.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SacModel,
    pub loss_curve: Vec<EpochLog>,
    pub n_windows: usize,
}

impl TrainOutcome {
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("epoch,loss,loss_unscaled,lr\n");
        for e in &self.loss_curve {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.loss * self.model.target_scale, e.lr));
        }
        out
    }
}

/// Training windows and targets pooled over series.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub universe: Universe,
    pub windows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub target_scale: f64,
}

pub fn root_mean_square(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl TrainingSet {
    pub fn build(series: &[TimeSeries], window: usize) -> Result<TrainingSet, TrainError> {
        if window < 2 {
            return Err(PipelineError::InvalidWindow(window).into());
        }
        let diffs: Vec<_> = series
            .iter()
            .filter(|s| s.len() >= 2)
            .map(|s| difference_values(&s.id, &s.values))
            .collect::<Result<_, _>>()?;
        let pooled: Vec<f64> = diffs.iter().flat_map(|d| d.alphas.iter().copied()).collect();
        let universe = Universe::build(&pooled)?;
        let mut windows = Vec::new();
        let mut targets = Vec::new();
        for d in &diffs {
            for j in 0..d.alphas.len().saturating_sub(window) {
                windows.push(d.alphas[j..j + window].to_vec());
                targets.push(d.alphas[j + window]);
            }
        }
        if windows.is_empty() {
            return Err(TrainError::EmptyTrainingSet { window });
        }
        let target_scale = root_mean_square(&pooled).max(crate::encoder::PHI_FLOOR);
        Ok(TrainingSet { universe, windows, targets, target_scale })
    }
}

/// Fits one model to the pooled training windows of `series`.
pub fn train(series: &[TimeSeries], hyper: &Hyper, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let set = TrainingSet::build(series, hyper.window)?;
    train_on(&set, hyper, cfg)
}

pub fn train_on(set: &TrainingSet, hyper: &Hyper, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let scaled: Vec<f64> = set.targets.iter().map(|t| t / set.target_scale).collect();
    let mut model = SacModel::new(hyper.clone(), set.universe, set.target_scale, median(&scaled), cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = NAdam::with_betas(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_opt);
    let mut sched =
        PlateauScheduler::new(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold, cfg.plateau_eps);
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..set.windows.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = opt.lr;
        let mut total = 0.0;
        for idx in order.chunks(batch) {
            let windows: Vec<&[f64]> = idx.iter().map(|&i| set.windows[i].as_slice()).collect();
            let targets: Vec<f64> = idx.iter().map(|&i| scaled[i]).collect();
            let (loss, dq, grads, stats) = {
                let mut pass = BatchPass::new(&model, cfg.exec);
                let q = pass.forward(&windows)?;
                let (loss, dq) = l1_loss(&q, &targets)?;
                let grads = pass.backward(&dq)?;
                let stats = pass.batch_stats().cloned().expect("forward ran");
                (loss, dq, grads, stats)
            };
            debug_assert_eq!(dq.len(), idx.len());
            total += loss * idx.len() as f64;
            model.update_running_stats(&stats);
            let mut params = model.params.tensors_mut();
            let mut slices: Vec<&mut [f64]> = params.iter_mut().map(|t| t.data_mut()).collect();
            let grad_slices: Vec<&[f64]> = grads.tensors().into_iter().map(|t| t.data()).collect();
            opt.step(&mut slices, &grad_slices);
        }
        let loss = total / set.windows.len() as f64;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        curve.push(EpochLog { epoch, loss, lr });
        opt.lr = sched.observe(loss);
    }
    Ok(TrainOutcome { model, loss_curve: curve, n_windows: set.windows.len() })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A trained model used as a recursive one-step forecaster.
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub model: SacModel,
}

impl Forecaster {
    pub fn new(model: SacModel) -> Forecaster {
        Forecaster { model }
    }

    pub fn forecast(&self, ts: &TimeSeries, horizon: usize) -> Result<Vec<f64>, ForecastError> {
        forecast_recursive(self, ts, horizon)
    }

    /// Forecasts every series; series with fewer than `W + 1` points fall
    /// back to the naive forecast. Returns the forecasts and the number of
    /// fallbacks.
    pub fn forecast_all(
        &self,
        series: &[TimeSeries],
        horizon: usize,
        exec: Execution,
    ) -> Result<(Vec<Vec<f64>>, usize), ForecastError> {
        let w = self.model.hyper.window;
        let out = exec.try_map(series, |s| {
            if s.len() < w + 1 {
                Ok((crate::pipeline::naive_forecast(s, horizon)?, true))
            } else {
                self.forecast(s, horizon).map(|f| (f, false))
            }
        })?;
        let fallbacks = out.iter().filter(|(_, fb)| *fb).count();
        Ok((out.into_iter().map(|(f, _)| f).collect(), fallbacks))
    }
}

impl DiffPredictor for Forecaster {
    type Error = ForecastError;

    fn window_size(&self) -> usize {
        self.model.hyper.window
    }

    fn predict_diff(&self, window: &[f64]) -> Result<f64, ForecastError> {
        Ok(self.model.predict(window)?)
    }
}
