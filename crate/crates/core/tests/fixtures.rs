use sacts_core::ingest::{parse_tsf, split_train_test, write_tsf, IngestError};
use sacts_core::{Dataset, Frequency, MissingPolicy};
use std::path::PathBuf;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn load(name: &str) -> Result<Dataset, IngestError> {
    Dataset::load(&data(name), MissingPolicy::ForwardFill)
}

fn round_trips(ds: &Dataset) {
    let text = write_tsf(ds);
    let back = parse_tsf(text.as_bytes()).unwrap();
    assert_eq!(&back, ds);
    assert_eq!(write_tsf(&back), text);
}

#[test]
fn archive_files_round_trip() {
    for name in [
        "m1_yearly_dataset.tsf",
        "us_births_1969_1988.tsf",
        "UnitTest_Tsf_Loader.tsf",
        "UnitTest_Tsf_Loader_hierarchical.tsf",
        "UnitTest_Tsf_Loader_no_start_timestamp.tsf",
        "missing_values.tsf",
        "empty_data.tsf",
        "synthetic_50.tsf",
    ] {
        let ds = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        round_trips(&ds);
    }
}

#[test]
fn m1_yearly_metadata() {
    let ds = load("m1_yearly_dataset.tsf").unwrap();
    assert_eq!(ds.name, "M1");
    assert_eq!(ds.series.len(), 181);
    assert_eq!(ds.horizon, Some(6));
    assert_eq!(ds.frequency, Some(Frequency::Yearly));
    assert!(!ds.equal_length);
    assert_eq!(&ds.series[0].values[..3], &[3600.0, 7700.0, 12300.0]);
    let (train, test) = split_train_test(&ds).unwrap();
    assert!(test.series.iter().all(|s| s.len() == 6));
    assert_eq!(train.total_points() + test.total_points(), ds.total_points());
}

#[test]
fn us_births_metadata() {
    let ds = load("us_births_1969_1988.tsf").unwrap();
    assert_eq!(ds.series.len(), 1);
    assert_eq!(ds.series[0].len(), 7305);
    assert_eq!(ds.horizon, Some(30));
    assert_eq!(ds.frequency, Some(Frequency::Daily));
    assert_eq!(&ds.series[0].values[..2], &[8486.0, 9002.0]);
}

#[test]
fn hierarchical_attributes_keep_their_fields() {
    let ds = load("UnitTest_Tsf_Loader_hierarchical.tsf").unwrap();
    assert_eq!(ds.attributes.len(), 3);
    assert_eq!(ds.series[0].fields[0], "G1");
    assert_eq!(ds.series[2].id, "T3");
    assert_eq!(ds.series[2].values.len(), 5);
}

#[test]
fn missing_slots_are_tracked() {
    let ds = load("missing_values.tsf").unwrap();
    assert!(ds.contains_missing);
    assert_eq!(ds.series[0].values, vec![1.0, 1.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(ds.series[0].missing, vec![1]);
    assert_eq!(ds.series[2].missing, vec![0, 2, 3]);
    assert_eq!(ds.series[2].values, vec![2.5, 2.5, 2.5, 2.5, 4.5, 5.5]);
    let text = write_tsf(&ds);
    assert!(text.contains("A:1,?,3,4,5,6"));
    assert!(text.contains("C:?,2.5,?,?,4.5,5.5"));

    let dropped = Dataset::load(&data("missing_values.tsf"), MissingPolicy::DropSeries).unwrap();
    assert_eq!(dropped.series.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(), ["B"]);
}

#[test]
fn empty_data_section() {
    let ds = load("empty_data.tsf").unwrap();
    assert!(ds.series.is_empty());
    assert_eq!(ds.horizon, Some(7));
}

fn parse_error(name: &str) -> (usize, String) {
    match load(name) {
        Err(IngestError::Parse { line, message }) => (line, message),
        other => panic!("{name}: expected a parse error, got {other:?}"),
    }
}

#[test]
fn malformed_fixtures_name_the_line() {
    let (line, msg) = parse_error("malformed_value.tsf");
    assert_eq!(line, 6);
    assert!(msg.contains("`five`"), "{msg}");

    let (line, msg) = parse_error("malformed_header.tsf");
    assert_eq!(line, 2);
    assert!(msg.contains("@frequncy"), "{msg}");

    let (line, msg) = parse_error("malformed_field_count.tsf");
    assert_eq!(line, 6);
    assert!(msg.contains("expected 2 attribute fields"), "{msg}");

    let (line, msg) = parse_error("malformed_order.tsf");
    assert_eq!(line, 2);
    assert!(msg.contains("@data before any @attribute"), "{msg}");
}

#[test]
fn unreadable_path() {
    assert!(matches!(load("no_such_file.tsf"), Err(IngestError::Io { .. })));
}
