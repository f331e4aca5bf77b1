//! Differencing, sliding windows, restoration and the naive baseline.

use crate::ingest::TimeSeries;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("series `{id}` has {len} points; at least {need} are required")]
    DegenerateSeries { id: String, len: usize, need: usize },
    #[error("window size {window} exceeds the {len} available differences")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window size must be at least 2 (got {0})")]
    InvalidWindow(usize),
    #[error("non-finite value in restoration: {prev} + {q}")]
    Numeric { prev: f64, q: f64 },
}

/// First-order difference sequence of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    pub alphas: Vec<f64>,
    /// ζ_1, the anchor for cumulative restoration.
    pub first_observed: f64,
    /// ζ_n, the anchor for one-step forecasting.
    pub last_observed: f64,
    pub source_id: String,
}

impl DiffSeries {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Rebuilds ζ_1..ζ_n by cumulative summation.
    pub fn restore_series(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.alphas.len() + 1);
        out.push(self.first_observed);
        let mut level = self.first_observed;
        for a in &self.alphas {
            level += a;
            out.push(level);
        }
        out
    }
}

pub fn difference(ts: &TimeSeries) -> Result<DiffSeries, PipelineError> {
    difference_values(&ts.id, &ts.values)
}

pub fn difference_values(id: &str, values: &[f64]) -> Result<DiffSeries, PipelineError> {
    if values.len() < 2 {
        return Err(PipelineError::DegenerateSeries { id: id.to_string(), len: values.len(), need: 2 });
    }
    Ok(DiffSeries {
        alphas: values.windows(2).map(|w| w[1] - w[0]).collect(),
        first_observed: values[0],
        last_observed: values[values.len() - 1],
        source_id: id.to_string(),
    })
}

/// Stride-1 windows of size `W` over a difference sequence.
///
/// Windows are 0-based here: window `j` covers `alphas[j..j + W]` and its
/// training target is `alphas[j + W]`, which exists for every window but the
/// last one.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet<'a> {
    alphas: &'a [f64],
    window: usize,
}

impl<'a> WindowSet<'a> {
    pub fn window_size(&self) -> usize {
        self.window
    }

    /// c = h − W + 1
    pub fn count(&self) -> usize {
        self.alphas.len() - self.window + 1
    }

    pub fn window(&self, j: usize) -> &'a [f64] {
        &self.alphas[j..j + self.window]
    }

    pub fn target_of(&self, j: usize) -> Option<f64> {
        self.alphas.get(j + self.window).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + '_ {
        self.alphas.windows(self.window)
    }

    /// (window, target) pairs for every window that has a target.
    pub fn training_pairs(&self) -> impl Iterator<Item = (&'a [f64], f64)> + '_ {
        self.alphas
            .windows(self.window)
            .zip(self.alphas[self.window..].iter().copied())
    }
}

pub fn make_windows(d: &DiffSeries, window: usize) -> Result<WindowSet<'_>, PipelineError> {
    windows_over(&d.alphas, window)
}

pub fn windows_over(alphas: &[f64], window: usize) -> Result<WindowSet<'_>, PipelineError> {
    if window < 2 {
        return Err(PipelineError::InvalidWindow(window));
    }
    if window > alphas.len() {
        return Err(PipelineError::WindowTooLarge { window, len: alphas.len() });
    }
    Ok(WindowSet { alphas, window })
}

/// ζ̂ = ζ_prev + Q
pub fn restore(prev_value: f64, q: f64) -> Result<f64, PipelineError> {
    let out = prev_value + q;
    if !prev_value.is_finite() || !q.is_finite() || !out.is_finite() {
        return Err(PipelineError::Numeric { prev: prev_value, q });
    }
    Ok(out)
}

/// Repeats the final observation `horizon` times.
pub fn naive_forecast(ts: &TimeSeries, horizon: usize) -> Result<Vec<f64>, PipelineError> {
    let last = ts.values.last().copied().ok_or_else(|| PipelineError::DegenerateSeries {
        id: ts.id.clone(),
        len: 0,
        need: 1,
    })?;
    Ok(vec![last; horizon])
}

/// Anything that maps a window of `W` differences to the next difference.
pub trait DiffPredictor {
    type Error: From<PipelineError>;

    fn window_size(&self) -> usize;

    fn predict_diff(&self, window: &[f64]) -> Result<f64, Self::Error>;
}

/// Iterated one-step forecasting: each prediction is appended to the history,
/// the tail is re-differenced and the next window is predicted.
pub fn forecast_recursive<P: DiffPredictor>(
    predictor: &P,
    ts: &TimeSeries,
    horizon: usize,
) -> Result<Vec<f64>, P::Error> {
    let w = predictor.window_size();
    if ts.len() < w + 1 {
        return Err(PipelineError::DegenerateSeries { id: ts.id.clone(), len: ts.len(), need: w + 1 }.into());
    }
    let mut tail: Vec<f64> = ts.values[ts.len() - (w + 1)..].to_vec();
    let mut diffs: Vec<f64> = tail.windows(2).map(|p| p[1] - p[0]).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let q = predictor.predict_diff(&diffs)?;
        let last = *tail.last().expect("tail is non-empty");
        let next = restore(last, q)?;
        out.push(next);
        tail.remove(0);
        tail.push(next);
        diffs.remove(0);
        diffs.push(next - last);
    }
    Ok(out)
}
