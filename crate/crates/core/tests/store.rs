use std::collections::BTreeSet;
use std::path::PathBuf;

use prefattach::store::{Category, EvolutionLog, IncrementPanel, SufficientStats};
use prefattach::Error;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn types(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// `(k_prev, x, y, z, k_curr)` of a named vertex at step `t`.
fn record(log: &EvolutionLog, panel: &IncrementPanel, t: usize, name: &str) -> (u32, u32, u32, u32, u32) {
    let i = log.vertex_id(name).unwrap() as usize;
    let mut out = None;
    panel.for_each_step(|r| {
        if r.t == t {
            out = Some((r.k_prev[i], r.x[i], r.y[i], r.z[i], r.k_curr[i]));
        }
    });
    out.unwrap()
}

#[test]
fn hand_checked_increments() {
    let log = EvolutionLog::ingest(data("events.csv"), &types(&["Imports"])).unwrap();
    let panel = IncrementPanel::extract(&log);
    // t = 0 is the first snapshot date, with no edges yet.
    assert_eq!(panel.num_steps(), 4);
    assert_eq!(record(&log, &panel, 2, "rlang"), (3, 0, 1, 0, 4));
    assert_eq!(record(&log, &panel, 2, "dplyr"), (0, 1, 1, 0, 2));
    assert_eq!(record(&log, &panel, 3, "tibble"), (1, 0, 0, 1, 0));
    assert_eq!(record(&log, &panel, 3, "rlang"), (4, 0, 1, 0, 5));
    assert_eq!(record(&log, &panel, 4, "tibble"), (0, 1, 1, 0, 2));
    assert_eq!(record(&log, &panel, 4, "rlang"), (5, 0, 1, 1, 5));
}

#[test]
fn type_filter_changes_degrees() {
    let both = EvolutionLog::ingest(data("events.csv"), &types(&["Imports", "Suggests"])).unwrap();
    let panel = IncrementPanel::extract(&both);
    assert_eq!(record(&both, &panel, 3, "tibble"), (2, 0, 0, 1, 1));
}

#[test]
fn identity_holds_against_replayed_edges() {
    let log = EvolutionLog::ingest(data("events.csv"), &types(&["Imports", "Suggests"])).unwrap();
    let panel = IncrementPanel::extract(&log);
    panel.for_each_step(|r| {
        assert_eq!(r.k_prev, log.degrees_at(r.t - 1).0.as_slice());
        assert_eq!(r.k_curr, log.degrees_at(r.t).0.as_slice());
        for i in 0..r.n_prev() {
            assert_eq!(r.k_curr[i] + r.z[i], r.k_prev[i] + r.x[i] + r.y[i]);
        }
    });
}

#[test]
fn statistics_round_trip() {
    let log = EvolutionLog::ingest(data("events.csv"), &types(&["Imports"])).unwrap();
    let panel = IncrementPanel::extract(&log);
    for category in Category::ALL {
        let stats = SufficientStats::summarize(&panel, category);
        let mut buf = Vec::new();
        stats.write_csv(&mut buf).unwrap();
        let back = SufficientStats::read_csv(buf.as_slice(), category, Some(log.timeline())).unwrap();
        assert_eq!(back, stats);
    }
    let ext = SufficientStats::summarize(&panel, Category::External);
    assert_eq!(ext.total_increment(), 5);
    assert_eq!(ext.num_steps(), 3);
}

#[test]
fn missing_file_and_bad_header() {
    let err = EvolutionLog::ingest(data("nope.csv"), &types(&["Imports"])).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n").unwrap();
    assert!(matches!(EvolutionLog::ingest(&bad, &types(&["Imports"])), Err(Error::Parse { .. })));
}
