//! Accuracy metrics, per-dataset reports and the Friedman/Nemenyi ranking.

mod rank;
mod report;

pub use rank::{nemenyi_cd, q_alpha_05, rank_models, RankError, Ranking};
pub use report::{render_table, MetricReport, SeriesMetric};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("{pred} predictions for {actual} actuals")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("metric over an empty list")]
    Empty,
}

fn check(pred: &[f64], actual: &[f64]) -> Result<(), MetricError> {
    if pred.len() != actual.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), actual: actual.len() });
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    check(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    check(pred, actual)?;
    Ok((pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum::<f64>() / pred.len() as f64).sqrt())
}
