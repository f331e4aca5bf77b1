//! Reader and writer for the archive's `.tsf` text format.
//!
//! ```text
//! # comment
//! @relation name
//! @attribute series_name string
//! @attribute start_timestamp date
//! @frequency daily
//! @horizon 30
//! @missing false
//! @equallength true
//! @data
//! T1:1749-01-01 00-00-00:1,2,3
//! ```
//!
//! Attribute fields are colon separated, values comma separated, `?` marks a
//! missing value.

use super::{apply_missing, Attribute, AttributeKind, Dataset, Frequency, IngestError, MissingPolicy, TimeSeries};
use chrono::NaiveDateTime;
use std::fmt::Write;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H-%M-%S";

/// Parses with the default missing-value policy (forward fill).
pub fn parse_tsf(bytes: &[u8]) -> Result<Dataset, IngestError> {
    parse_tsf_with(bytes, MissingPolicy::default())
}

pub fn parse_tsf_with(bytes: &[u8], policy: MissingPolicy) -> Result<Dataset, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        IngestError::parse(line, "input is not valid UTF-8")
    })?;

    let mut ds = Dataset {
        name: String::new(),
        attributes: Vec::new(),
        series: Vec::new(),
        frequency: None,
        horizon: None,
        contains_missing: false,
        equal_length: false,
    };
    let mut in_data = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if in_data {
            if line.starts_with('@') {
                return Err(IngestError::parse(lineno, format!("header line after @data: `{line}`")));
            }
            if let Some(series) = parse_data_line(line, lineno, &ds.attributes, policy)? {
                ds.series.push(series);
            }
            continue;
        }
        parse_header_line(line, lineno, &mut ds, &mut in_data)?;
    }
    Ok(ds)
}

fn parse_header_line(line: &str, lineno: usize, ds: &mut Dataset, in_data: &mut bool) -> Result<(), IngestError> {
    let Some(rest) = line.strip_prefix('@') else {
        return Err(IngestError::parse(lineno, format!("expected a `@` header line, found `{line}`")));
    };
    let (key, value) = match rest.split_once(char::is_whitespace) {
        Some((k, v)) => (k, v.trim()),
        None => (rest, ""),
    };
    let need_value = |what: &str| -> Result<(), IngestError> {
        if value.is_empty() {
            Err(IngestError::parse(lineno, format!("@{what} needs a value")))
        } else {
            Ok(())
        }
    };
    match key.to_ascii_lowercase().as_str() {
        "relation" => {
            need_value("relation")?;
            ds.name = value.to_string();
        }
        "attribute" => {
            let mut parts = value.split_whitespace();
            let (Some(name), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(IngestError::parse(lineno, "@attribute needs exactly a name and a type"));
            };
            let kind = match kind.to_ascii_lowercase().as_str() {
                "string" => AttributeKind::String,
                "numeric" => AttributeKind::Numeric,
                "date" => AttributeKind::Date,
                other => return Err(IngestError::parse(lineno, format!("unknown attribute type `{other}`"))),
            };
            ds.attributes.push(Attribute { name: name.to_string(), kind });
        }
        "frequency" => {
            need_value("frequency")?;
            ds.frequency = Some(Frequency::from_label(value));
        }
        "horizon" => {
            let h: usize = value
                .parse()
                .map_err(|_| IngestError::parse(lineno, format!("@horizon is not a positive integer: `{value}`")))?;
            if h == 0 {
                return Err(IngestError::parse(lineno, "@horizon must be at least 1"));
            }
            ds.horizon = Some(h);
        }
        "missing" => ds.contains_missing = parse_bool(value, lineno)?,
        "equallength" => ds.equal_length = parse_bool(value, lineno)?,
        "data" => {
            if ds.attributes.is_empty() {
                return Err(IngestError::parse(lineno, "@data before any @attribute was declared"));
            }
            *in_data = true;
        }
        other => return Err(IngestError::parse(lineno, format!("unknown header `@{other}`"))),
    }
    Ok(())
}

fn parse_bool(value: &str, lineno: usize) -> Result<bool, IngestError> {
    match value.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(IngestError::parse(lineno, format!("expected true/false, found `{value}`"))),
    }
}

fn parse_data_line(
    line: &str,
    lineno: usize,
    attributes: &[Attribute],
    policy: MissingPolicy,
) -> Result<Option<TimeSeries>, IngestError> {
    let parts: Vec<&str> = line.splitn(attributes.len() + 1, ':').collect();
    if parts.len() != attributes.len() + 1 {
        return Err(IngestError::parse(
            lineno,
            format!("expected {} attribute fields before the values, found {}", attributes.len(), parts.len() - 1),
        ));
    }
    let (fields, values) = parts.split_at(attributes.len());

    let mut id = None;
    let mut start = None;
    for (attr, field) in attributes.iter().zip(fields) {
        match attr.kind {
            AttributeKind::Date if start.is_none() => {
                let ts = NaiveDateTime::parse_from_str(field.trim(), TIMESTAMP_FORMAT).map_err(|_| {
                    IngestError::parse(lineno, format!("`{field}` is not a timestamp for `{}`", attr.name))
                })?;
                start = Some(ts);
            }
            AttributeKind::Numeric => {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| IngestError::parse(lineno, format!("`{field}` is not numeric for `{}`", attr.name)))?;
            }
            _ => {}
        }
        if attr.name == "series_name" {
            id = Some(field.trim().to_string());
        }
    }
    let id = id
        .or_else(|| {
            attributes.iter().zip(fields).find(|(a, _)| a.kind == AttributeKind::String).map(|(_, f)| f.trim().to_string())
        })
        .unwrap_or_else(|| fields[0].trim().to_string());

    let text = values[0].trim();
    let raw: Vec<Option<f64>> = if text.is_empty() {
        Vec::new()
    } else {
        text.split(',')
            .map(|tok| {
                let tok = tok.trim();
                if tok == "?" {
                    return Ok(None);
                }
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(IngestError::parse(lineno, format!("value `{tok}` is not a finite real"))),
                }
            })
            .collect::<Result<_, _>>()?
    };
    if raw.is_empty() {
        return Ok(Some(TimeSeries {
            id,
            start_timestamp: start,
            values: Vec::new(),
            missing: Vec::new(),
            fields: fields.iter().map(|f| f.trim().to_string()).collect(),
        }));
    }
    Ok(apply_missing(raw, policy).map(|(values, missing)| TimeSeries {
        id,
        start_timestamp: start,
        values,
        missing,
        fields: fields.iter().map(|f| f.trim().to_string()).collect(),
    }))
}

/// Serialises a dataset back to `.tsf`; `missing` slots are written as `?`.
pub fn write_tsf(ds: &Dataset) -> String {
    let mut out = String::new();
    if !ds.name.is_empty() {
        let _ = writeln!(out, "@relation {}", ds.name);
    }
    for a in &ds.attributes {
        let _ = writeln!(out, "@attribute {} {}", a.name, a.kind.label());
    }
    if let Some(f) = &ds.frequency {
        let _ = writeln!(out, "@frequency {f}");
    }
    if let Some(h) = ds.horizon {
        let _ = writeln!(out, "@horizon {h}");
    }
    let _ = writeln!(out, "@missing {}", ds.contains_missing);
    let _ = writeln!(out, "@equallength {}", ds.equal_length);
    out.push_str("@data\n");
    for s in &ds.series {
        let mut fields = s.fields.clone();
        if fields.len() != ds.attributes.len() {
            fields = vec![s.id.clone()];
        }
        for f in &fields {
            out.push_str(f);
            out.push(':');
        }
        let mut missing = s.missing.iter().peekable();
        for (i, v) in s.values.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            if missing.peek() == Some(&&i) {
                missing.next();
                out.push('?');
            } else {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "@relation t\n@attribute series_name string\n@attribute start_timestamp date\n@frequency daily\n@horizon 30\n@missing false\n@equallength false\n@data\n";

    #[test]
    fn parses_single_line() {
        let text = format!("{HEADER}T1:1749-01-01 00-00-00:1,2,3\n");
        let ds = parse_tsf(text.as_bytes()).unwrap();
        assert_eq!(ds.horizon, Some(30));
        assert_eq!(ds.frequency, Some(Frequency::Daily));
        assert_eq!(ds.series.len(), 1);
        assert_eq!(ds.series[0].id, "T1");
        assert_eq!(ds.series[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(
            ds.series[0].start_timestamp.unwrap().to_string(),
            "1749-01-01 00:00:00"
        );
    }

    #[test]
    fn empty_data_section() {
        let ds = parse_tsf(HEADER.as_bytes()).unwrap();
        assert!(ds.series.is_empty());
    }

    #[test]
    fn missing_slot_is_recorded() {
        let text = "@attribute series_name string\n@missing true\n@data\nT1:1,?,3\n";
        let ds = parse_tsf(text.as_bytes()).unwrap();
        assert!(ds.contains_missing);
        assert_eq!(ds.series[0].missing, vec![1]);
        assert_eq!(ds.series[0].values, vec![1.0, 1.0, 3.0]);
        let dropped = parse_tsf_with(text.as_bytes(), MissingPolicy::DropSeries).unwrap();
        assert!(dropped.series.is_empty());
    }

    #[test]
    fn malformed_header_reports_line() {
        let text = "@relation t\n@attribute series_name\n@data\n";
        match parse_tsf(text.as_bytes()) {
            Err(IngestError::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_value_reports_line() {
        let text = "@attribute series_name string\n@data\nT1:1,2\nT2:1,x,3\n";
        match parse_tsf(text.as_bytes()) {
            Err(IngestError::Parse { line: 4, message }) => assert!(message.contains("`x`")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn data_before_attributes() {
        let text = "@relation t\n@data\nT1:1,2\n";
        assert!(matches!(parse_tsf(text.as_bytes()), Err(IngestError::Parse { line: 2, .. })));
    }

    #[test]
    fn round_trip_with_missing() {
        let text = format!("{HEADER}T1:2000-01-01 00-00-00:1.5,?,3\nT2:2001-06-01 12-30-00:-4,5e3\n");
        let ds = parse_tsf(text.as_bytes()).unwrap();
        let again = parse_tsf(write_tsf(&ds).as_bytes()).unwrap();
        assert_eq!(ds, again);
    }
}
