use std::collections::BTreeSet;
use std::path::PathBuf;

use prefattach::diagnostics::{
    degree_correlation, free_fit, slope1_intercept, smoothed_averages, write_bins_csv, GeometricBins,
};
use prefattach::store::{Category, EvolutionLog, IncrementPanel};

#[test]
fn fixture_tables() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/events.csv");
    let log = EvolutionLog::ingest(path, &BTreeSet::from(["Imports".to_string()])).unwrap();
    let panel = IncrementPanel::extract(&log);
    let table = smoothed_averages(&panel, Category::External, 2, GeometricBins::default()).unwrap();
    // Positive degrees before step 2: tibble 1 and rlang 3, in separate bins.
    assert_eq!(table.len(), 2);
    assert_eq!((table[0].k, table[0].mean_increment, table[0].zero_mean), (1.0, 0.0, true));
    assert_eq!((table[1].k, table[1].mean_increment), (3.0, 1.0));
    // One usable point leaves no spread for a free fit.
    assert!(free_fit(&table).is_err());
    assert!((slope1_intercept(&table).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-12);

    let mut csv = Vec::new();
    write_bins_csv(&mut csv, &table).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);

    let (indeg, outdeg) = log.degrees_at(log.num_steps());
    let r = degree_correlation(&indeg, &outdeg).unwrap();
    assert!((-1.0..=1.0).contains(&r));
}
