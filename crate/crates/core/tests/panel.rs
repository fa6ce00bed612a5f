use std::path::Path;

use drofolio::{Error, MissingPolicy, ReturnPanel};
use nalgebra::DMatrix;

fn parse(text: &str, policy: MissingPolicy) -> drofolio::Result<ReturnPanel> {
    ReturnPanel::from_csv_reader(text.as_bytes(), Path::new("mem.csv"), policy)
}

const GOOD: &str = "\
# exported returns
date,AAA,BBB,CCC
2020-01-01,0.01,-0.02,0.003
2020-01-02,0.00,0.01,-0.001
2020-01-03,-0.01,0.02,0.002
2020-01-06,0.02,0.00,0.001
";

#[test]
fn reads_wide_layout() {
    let p = parse(GOOD, MissingPolicy::Reject).unwrap();
    assert_eq!(p.n_assets(), 3);
    assert_eq!(p.n_periods(), 4);
    assert_eq!(p.asset_ids(), ["AAA", "BBB", "CCC"]);
    assert_eq!(p.returns()[(1, 0)], -0.02);
}

#[test]
fn csv_round_trip_is_exact() {
    let p = ReturnPanel::from_matrix(DMatrix::from_fn(3, 5, |i, j| (i as f64 + 1.0) / 3.0 - j as f64 * 1e-7)).unwrap();
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let back = parse(std::str::from_utf8(&buf).unwrap(), MissingPolicy::Reject).unwrap();
    assert_eq!(back, p);
}

#[test]
fn missing_cell_rejected_with_line() {
    let text = GOOD.replace("0.00,0.01,-0.001", "0.00,,-0.001");
    match parse(&text, MissingPolicy::Reject) {
        Err(Error::Data { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_cell_drops_asset_when_asked() {
    let text = GOOD.replace("0.00,0.01,-0.001", "0.00,NA,-0.001");
    let p = parse(&text, MissingPolicy::DropAssets).unwrap();
    assert_eq!(p.asset_ids(), ["AAA", "CCC"]);
}

#[test]
fn non_increasing_time_rejected() {
    let text = GOOD.replace("2020-01-06", "2020-01-02");
    assert!(matches!(parse(&text, MissingPolicy::Reject), Err(Error::Data { .. })));
}

#[test]
fn too_few_periods_or_assets_rejected() {
    let short: String = GOOD.lines().take(4).collect::<Vec<_>>().join("\n");
    assert!(parse(&short, MissingPolicy::Reject).is_err());
    assert!(ReturnPanel::from_matrix(DMatrix::zeros(1, 10)).is_err());
}

#[test]
fn garbage_cell_is_a_data_error() {
    let text = GOOD.replace("0.003", "abc");
    let err = parse(&text, MissingPolicy::Reject).unwrap_err();
    assert!(err.is_data_error());
}
