//! Dataset ingestion: `.tsf` archive files, plain CSV, and train/test splits.

mod csv;
mod tsf;

pub use self::csv::parse_csv;
pub use self::tsf::{parse_tsf, parse_tsf_with, write_tsf};

use chrono::NaiveDateTime;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("series `{id}` has {len} observations; horizon {horizon} leaves no training data")]
    Split { id: String, len: usize, horizon: usize },
    #[error("horizon must be at least 1 (got {0})")]
    InvalidHorizon(usize),
    #[error("dataset has no horizon; supply one explicitly")]
    MissingHorizon,
    #[error("csv: {0}")]
    Csv(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl IngestError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        IngestError::Parse { line, message: message.into() }
    }
}

/// Sampling rate declared by a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
    /// Anything finer than hourly; the archive label (`half_hourly`,
    /// `10_minutes`, `4_seconds`, ...) is kept verbatim.
    SubHourly(String),
}

impl Frequency {
    pub fn from_label(label: &str) -> Frequency {
        match label.trim().to_ascii_lowercase().as_str() {
            "yearly" => Frequency::Yearly,
            "quarterly" => Frequency::Quarterly,
            "monthly" => Frequency::Monthly,
            "weekly" => Frequency::Weekly,
            "daily" => Frequency::Daily,
            "hourly" => Frequency::Hourly,
            other => Frequency::SubHourly(other.to_string()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Frequency::Yearly => "yearly",
            Frequency::Quarterly => "quarterly",
            Frequency::Monthly => "monthly",
            Frequency::Weekly => "weekly",
            Frequency::Daily => "daily",
            Frequency::Hourly => "hourly",
            Frequency::SubHourly(s) => s,
        }
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// What to do with `?` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Drop every series that has at least one missing value.
    DropSeries,
    /// Carry the previous observation forward; leading gaps take the first
    /// observed value.
    #[default]
    ForwardFill,
}

impl std::str::FromStr for MissingPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop-series" | "drop" => Ok(MissingPolicy::DropSeries),
            "forward-fill" | "ffill" => Ok(MissingPolicy::ForwardFill),
            other => Err(format!("unknown missing-value policy `{other}`")),
        }
    }
}

impl fmt::Display for MissingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingPolicy::DropSeries => "drop-series",
            MissingPolicy::ForwardFill => "forward-fill",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeKind {
    String,
    Numeric,
    Date,
}

impl AttributeKind {
    fn label(self) -> &'static str {
        match self {
            AttributeKind::String => "string",
            AttributeKind::Numeric => "numeric",
            AttributeKind::Date => "date",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
}

/// One univariate series. `values` holds only finite reals; indices that were
/// `?` in the source are listed in `missing` (and were filled per policy).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub id: String,
    pub start_timestamp: Option<NaiveDateTime>,
    pub values: Vec<f64>,
    pub missing: Vec<usize>,
    /// Raw attribute fields in declaration order, kept for re-serialisation.
    pub fields: Vec<String>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        let id = id.into();
        TimeSeries {
            fields: vec![id.clone()],
            id,
            start_timestamp: None,
            values,
            missing: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub series: Vec<TimeSeries>,
    pub frequency: Option<Frequency>,
    pub horizon: Option<usize>,
    pub contains_missing: bool,
    pub equal_length: bool,
}

impl Dataset {
    /// A dataset of plain series with a single `series_name` attribute.
    pub fn from_series(name: impl Into<String>, series: Vec<TimeSeries>, horizon: Option<usize>) -> Self {
        let equal_length = series.windows(2).all(|w| w[0].len() == w[1].len());
        Dataset {
            name: name.into(),
            attributes: vec![Attribute { name: "series_name".into(), kind: AttributeKind::String }],
            contains_missing: series.iter().any(|s| !s.missing.is_empty()),
            equal_length,
            series,
            frequency: None,
            horizon,
        }
    }

    /// Loads a `.tsf` or `.csv` file, chosen by extension (anything that is not
    /// `.csv` is parsed as `.tsf`).
    pub fn load(path: &Path, policy: MissingPolicy) -> Result<Dataset, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let is_csv = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("csv"))
            .unwrap_or(false);
        if is_csv {
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            parse_csv(&name, &text, policy)
        } else {
            parse_tsf_with(text.as_bytes(), policy)
        }
    }

    pub fn total_points(&self) -> usize {
        self.series.iter().map(TimeSeries::len).sum()
    }
}

/// Holds out the final `horizon` values of every series, using the dataset's
/// declared horizon.
pub fn split_train_test(ds: &Dataset) -> Result<(Dataset, Dataset), IngestError> {
    let horizon = ds.horizon.ok_or(IngestError::MissingHorizon)?;
    split_train_test_with(ds, horizon)
}

pub fn split_train_test_with(ds: &Dataset, horizon: usize) -> Result<(Dataset, Dataset), IngestError> {
    if horizon == 0 {
        return Err(IngestError::InvalidHorizon(0));
    }
    let mut train = Vec::with_capacity(ds.series.len());
    let mut test = Vec::with_capacity(ds.series.len());
    for s in &ds.series {
        if s.len() <= horizon {
            return Err(IngestError::Split { id: s.id.clone(), len: s.len(), horizon });
        }
        let cut = s.len() - horizon;
        let (head, tail) = s.values.split_at(cut);
        train.push(TimeSeries {
            values: head.to_vec(),
            missing: s.missing.iter().copied().filter(|&i| i < cut).collect(),
            ..s.clone()
        });
        test.push(TimeSeries {
            values: tail.to_vec(),
            missing: s.missing.iter().filter(|&&i| i >= cut).map(|&i| i - cut).collect(),
            // The test part starts `cut` steps later; the timestamp is only a
            // label, so it is left unset rather than guessed.
            start_timestamp: None,
            ..s.clone()
        });
    }
    let with = |series| Dataset { series, horizon: Some(horizon), ..ds.clone() };
    Ok((with(train), with(test)))
}

/// Applies `policy` to raw observations. Returns `None` when the series is
/// dropped.
pub(crate) fn apply_missing(
    raw: Vec<Option<f64>>,
    policy: MissingPolicy,
) -> Option<(Vec<f64>, Vec<usize>)> {
    let missing: Vec<usize> = raw
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.is_none().then_some(i))
        .collect();
    if missing.is_empty() {
        return Some((raw.into_iter().flatten().collect(), missing));
    }
    match policy {
        MissingPolicy::DropSeries => None,
        MissingPolicy::ForwardFill => {
            let first = raw.iter().flatten().next().copied()?;
            let mut last = first;
            let values = raw
                .into_iter()
                .map(|v| {
                    if let Some(x) = v {
                        last = x;
                    }
                    last
                })
                .collect();
            Some((values, missing))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(values: Vec<f64>, horizon: usize) -> Dataset {
        Dataset::from_series("t", vec![TimeSeries::new("S1", values)], Some(horizon))
    }

    #[test]
    fn split_holds_out_horizon() {
        let d = ds((1..=10).map(f64::from).collect(), 3);
        let (train, test) = split_train_test(&d).unwrap();
        assert_eq!(train.series[0].values, (1..=7).map(f64::from).collect::<Vec<_>>());
        assert_eq!(test.series[0].values, vec![8.0, 9.0, 10.0]);
    }

    #[test]
    fn split_rejects_zero_horizon() {
        let d = ds(vec![1.0, 2.0], 0);
        assert_eq!(split_train_test(&d), Err(IngestError::InvalidHorizon(0)));
    }

    #[test]
    fn split_names_short_series() {
        let d = ds(vec![1.0, 2.0, 3.0], 3);
        match split_train_test(&d) {
            Err(IngestError::Split { id, len: 3, horizon: 3 }) => assert_eq!(id, "S1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn forward_fill_and_drop() {
        let raw = vec![None, Some(2.0), None, Some(4.0), None];
        let (v, m) = apply_missing(raw.clone(), MissingPolicy::ForwardFill).unwrap();
        assert_eq!(v, vec![2.0, 2.0, 2.0, 4.0, 4.0]);
        assert_eq!(m, vec![0, 2, 4]);
        assert!(apply_missing(raw, MissingPolicy::DropSeries).is_none());
        assert!(apply_missing(vec![None, None], MissingPolicy::ForwardFill).is_none());
    }

    #[test]
    fn frequency_labels_round_trip() {
        for label in ["yearly", "quarterly", "monthly", "weekly", "daily", "hourly", "half_hourly", "4_seconds"] {
            assert_eq!(Frequency::from_label(label).label(), label);
        }
        assert_eq!(Frequency::from_label("10_minutes"), Frequency::SubHourly("10_minutes".into()));
    }
}
