//! One series per column, header row holds the series ids.
//!
//! Columns may have different lengths: trailing empty cells end a series.
//! Empty cells or `?` before the last observed value count as missing.

use super::{apply_missing, Dataset, IngestError, MissingPolicy, TimeSeries};

pub fn parse_csv(name: &str, text: &str, policy: MissingPolicy) -> Result<Dataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let ids: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if ids.is_empty() || ids.iter().any(String::is_empty) {
        return Err(IngestError::parse(1, "header row must name every column"));
    }

    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let lineno = row_idx + 2;
        let record = record.map_err(|e| IngestError::Csv(e.to_string()))?;
        if record.len() > ids.len() {
            return Err(IngestError::parse(lineno, format!("{} cells but only {} columns", record.len(), ids.len())));
        }
        for (col, cell) in columns.iter_mut().zip(record.iter().chain(std::iter::repeat(""))) {
            let value = match cell {
                "" | "?" => None,
                tok => match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    _ => return Err(IngestError::parse(lineno, format!("value `{tok}` is not a finite real"))),
                },
            };
            col.push(value);
        }
    }

    let mut series = Vec::with_capacity(ids.len());
    for (id, mut col) in ids.into_iter().zip(columns) {
        while col.last() == Some(&None) {
            col.pop();
        }
        if col.is_empty() {
            continue;
        }
        if let Some((values, missing)) = apply_missing(col, policy) {
            series.push(TimeSeries { missing, ..TimeSeries::new(id, values) });
        }
    }
    Ok(Dataset::from_series(name, series, None))
}
