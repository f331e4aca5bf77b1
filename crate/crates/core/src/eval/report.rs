use super::{mae, rmse, MetricError};
use crate::ingest::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMetric {
    pub id: String,
    pub mae: f64,
    pub rmse: f64,
}

/// Dataset-level accuracy of one model: unweighted mean over series.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub dataset: String,
    pub model: String,
    pub mae: f64,
    pub rmse: f64,
    pub per_series: Vec<SeriesMetric>,
}

impl MetricReport {
    pub fn from_forecasts(
        dataset: &str,
        model: &str,
        forecasts: &[Vec<f64>],
        actuals: &[TimeSeries],
    ) -> Result<MetricReport, MetricError> {
        if forecasts.len() != actuals.len() {
            return Err(MetricError::LengthMismatch { pred: forecasts.len(), actual: actuals.len() });
        }
        if forecasts.is_empty() {
            return Err(MetricError::Empty);
        }
        let per_series = forecasts
            .iter()
            .zip(actuals)
            .map(|(f, a)| Ok(SeriesMetric { id: a.id.clone(), mae: mae(f, &a.values)?, rmse: rmse(f, &a.values)? }))
            .collect::<Result<Vec<_>, MetricError>>()?;
        let n = per_series.len() as f64;
        Ok(MetricReport {
            dataset: dataset.to_string(),
            model: model.to_string(),
            mae: per_series.iter().map(|s| s.mae).sum::<f64>() / n,
            rmse: per_series.iter().map(|s| s.rmse).sum::<f64>() / n,
            per_series,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,model,series,mae,rmse\n");
        for s in &self.per_series {
            out.push_str(&format!("{},{},{},{},{}\n", self.dataset, self.model, s.id, s.mae, s.rmse));
        }
        out.push_str(&format!("{},{},MEAN,{},{}\n", self.dataset, self.model, self.mae, self.rmse));
        out
    }
}

/// Aligned plain-text table: one row per dataset, MAE and RMSE per model.
pub fn render_table(reports: &[MetricReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    let mut header = vec!["dataset".to_string()];
    for m in &models {
        header.push(format!("{m} MAE"));
        header.push(format!("{m} RMSE"));
    }
    let mut rows = vec![header];
    for d in &datasets {
        let mut row = vec![d.to_string()];
        for m in &models {
            match reports.iter().find(|r| r.dataset == *d && r.model == *m) {
                Some(r) => {
                    row.push(format!("{:.2}", r.mae));
                    row.push(format!("{:.2}", r.rmse));
                }
                None => row.extend(["-".to_string(), "-".to_string()]),
            }
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}
