use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;

use super::event::{read_events, write_events, Action, EdgeEvent};
use crate::error::{Error, Result};

/// Dense vertex identifier. Ids are assigned in order of first appearance, so
/// the vertices existing at time `t` are exactly the ids below `n_t`.
pub type VertexId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeChange {
    pub source: VertexId,
    pub target: VertexId,
    pub action: Action,
}

/// A validated, time-indexed evolution of a directed graph.
///
/// Time index 0 is the earliest snapshot; every later index is a distinct
/// date on which the edge set changed. Vertices are never removed.
#[derive(Debug, Clone, Default)]
pub struct EvolutionLog {
    events: Vec<EdgeEvent>,
    timeline: Vec<NaiveDate>,
    names: Vec<String>,
    first_seen: Vec<usize>,
    changes: Vec<Vec<EdgeChange>>,
}

#[derive(Default)]
struct KeyOps {
    adds: u32,
    removes: u32,
    row: usize,
}

impl EvolutionLog {
    /// Reads an event CSV and keeps the rows whose type is in `dep_types`.
    pub fn ingest(path: impl AsRef<Path>, dep_types: &BTreeSet<String>) -> Result<Self> {
        let path = path.as_ref();
        if dep_types.is_empty() {
            return Err(Error::InvalidConfig("at least one dependency type is required".into()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = read_events(BufReader::new(file))?;
        let rows = rows.into_iter().filter(|(_, e)| dep_types.contains(&e.dep_type)).collect();
        Self::build(rows)
    }

    /// Builds a log from in-memory events; line numbers in errors are 1-based
    /// positions in `events`.
    pub fn from_events(events: Vec<EdgeEvent>) -> Result<Self> {
        Self::build(events.into_iter().enumerate().map(|(i, e)| (i as u64 + 1, e)).collect())
    }

    fn build(mut rows: Vec<(u64, EdgeEvent)>) -> Result<Self> {
        for (line, e) in &rows {
            e.validate(*line)?;
        }
        rows.sort_by_key(|(_, e)| e.curr_date);

        let mut timeline: Vec<NaiveDate> = rows.iter().map(|(_, e)| e.curr_date).collect();
        if let Some(first) = rows.iter().map(|(_, e)| e.prev_date).min() {
            timeline.push(first);
        }
        timeline.sort();
        timeline.dedup();

        // Temporary interning over every name in the file; final ids follow first
        // appearance in a net change.
        let mut tmp_ids: HashMap<String, u32> = HashMap::new();
        let mut tmp_names: Vec<String> = Vec::new();
        let mut type_ids: HashMap<String, u32> = HashMap::new();
        let mut keyed: Vec<(u32, u32, u32)> = Vec::with_capacity(rows.len());
        for (_, e) in &rows {
            let mut id_of = |s: &str| -> u32 {
                if let Some(&id) = tmp_ids.get(s) {
                    return id;
                }
                tmp_names.push(s.to_string());
                let id = tmp_names.len() as u32 - 1;
                tmp_ids.insert(s.to_string(), id);
                id
            };
            let src = id_of(&e.source);
            let tgt = id_of(&e.target);
            let n_types = type_ids.len() as u32;
            let ty = *type_ids.entry(e.dep_type.clone()).or_insert(n_types);
            keyed.push((src, tgt, ty));
        }

        let mut typed_edges: HashSet<(u32, u32, u32)> = HashSet::new();
        let mut multiplicity: HashMap<(u32, u32), u32> = HashMap::new();

        let mut final_id: HashMap<u32, VertexId> = HashMap::new();
        let mut names = Vec::new();
        let mut first_seen = Vec::new();
        let mut changes: Vec<Vec<EdgeChange>> = vec![Vec::new(); timeline.len()];

        let mut start = 0;
        while start < rows.len() {
            let date = rows[start].1.curr_date;
            let mut end = start;
            while end < rows.len() && rows[end].1.curr_date == date {
                end += 1;
            }
            let t = timeline.binary_search(&date).expect("curr_date is in timeline");

            let mut ops: HashMap<(u32, u32, u32), KeyOps> = HashMap::new();
            let mut key_order: Vec<(u32, u32, u32)> = Vec::new();
            for i in start..end {
                let key = keyed[i];
                let entry = ops.entry(key).or_insert_with(|| {
                    key_order.push(key);
                    KeyOps::default()
                });
                match rows[i].1.action {
                    Action::Added => entry.adds += 1,
                    Action::Removed => entry.removes += 1,
                }
                entry.row = i;
            }

            let mut touched: Vec<(u32, u32)> = Vec::new();
            let mut before: HashMap<(u32, u32), bool> = HashMap::new();
            for key in &key_order {
                let op = &ops[key];
                let existed = typed_edges.contains(key);
                let (line, e) = &rows[op.row];
                let line = *line;
                let describe = || format!("{} -> {} ({})", e.source, e.target, e.dep_type);
                if op.adds > 1 || (existed && op.adds > op.removes) {
                    return Err(Error::InvalidEvent {
                        line,
                        message: format!("duplicate addition of existing edge {}", describe()),
                    });
                }
                if op.removes > 1 || (!existed && op.removes > op.adds) {
                    return Err(Error::InvalidEvent {
                        line,
                        message: format!("removal of non-existent edge {}", describe()),
                    });
                }
                let exists_after = existed as u32 + op.adds - op.removes == 1;
                if exists_after == existed {
                    continue;
                }
                let pair = (key.0, key.1);
                let count = multiplicity.entry(pair).or_insert(0);
                before.entry(pair).or_insert_with(|| {
                    touched.push(pair);
                    *count > 0
                });
                if exists_after {
                    typed_edges.insert(*key);
                    *count += 1;
                } else {
                    typed_edges.remove(key);
                    *count -= 1;
                }
            }

            for pair in touched {
                let was = before[&pair];
                let now = multiplicity.get(&pair).copied().unwrap_or(0) > 0;
                if was == now {
                    continue;
                }
                let mut dense = |tmp: u32| -> VertexId {
                    *final_id.entry(tmp).or_insert_with(|| {
                        names.push(tmp_names[tmp as usize].to_string());
                        first_seen.push(t);
                        names.len() as VertexId - 1
                    })
                };
                let source = dense(pair.0);
                let target = dense(pair.1);
                let action = if now { Action::Added } else { Action::Removed };
                changes[t].push(EdgeChange { source, target, action });
            }
            start = end;
        }

        let events = rows.into_iter().map(|(_, e)| e).collect();
        Ok(Self { events, timeline, names, first_seen, changes })
    }

    pub fn events(&self) -> &[EdgeEvent] {
        &self.events
    }

    pub fn timeline(&self) -> &[NaiveDate] {
        &self.timeline
    }

    /// Number of time steps `T` (the timeline has `T + 1` points).
    pub fn num_steps(&self) -> usize {
        self.timeline.len().saturating_sub(1)
    }

    pub fn num_vertices(&self) -> usize {
        self.names.len()
    }

    pub fn vertex_name(&self, id: VertexId) -> &str {
        &self.names[id as usize]
    }

    pub fn vertex_id(&self, name: &str) -> Option<VertexId> {
        self.names.iter().position(|n| n == name).map(|i| i as VertexId)
    }

    /// Time index at which each vertex first appears, indexed by id.
    pub fn vertex_first_seen(&self) -> &[usize] {
        &self.first_seen
    }

    /// `n_t`: number of vertices present at time `t`.
    pub fn vertex_count_at(&self, t: usize) -> usize {
        self.first_seen.partition_point(|&s| s <= t)
    }

    /// Net edge changes between `t - 1` and `t` (for `t = 0`, the initial edges).
    pub fn changes_at(&self, t: usize) -> &[EdgeChange] {
        &self.changes[t]
    }

    /// Edge set at time `t`, rebuilt by replaying every change up to `t`.
    pub fn edges_at(&self, t: usize) -> BTreeSet<(VertexId, VertexId)> {
        let mut edges = BTreeSet::new();
        for step in &self.changes[..=t] {
            for c in step {
                match c.action {
                    Action::Added => edges.insert((c.source, c.target)),
                    Action::Removed => edges.remove(&(c.source, c.target)),
                };
            }
        }
        edges
    }

    /// In- and out-degrees of the vertices present at time `t`.
    pub fn degrees_at(&self, t: usize) -> (Vec<u32>, Vec<u32>) {
        let n = self.vertex_count_at(t);
        let mut indeg = vec![0u32; n];
        let mut outdeg = vec![0u32; n];
        for (s, d) in self.edges_at(t) {
            outdeg[s as usize] += 1;
            indeg[d as usize] += 1;
        }
        (indeg, outdeg)
    }

    /// Index of `date` in the timeline, or of the last time point before it.
    pub fn time_index_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        match self.timeline.binary_search(&date) {
            Ok(i) => Some(i),
            Err(0) => None,
            Err(i) => Some(i - 1),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_events(std::io::BufWriter::new(file), &self.events)
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    fn ev(s: &str, t: &str, ty: &str, action: Action, prev: u32, curr: u32) -> EdgeEvent {
        EdgeEvent::new(s, t, ty, action, d(prev), d(curr))
    }

    fn types(list: &[&str]) -> BTreeSet<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_row_log() {
        let log = EvolutionLog::from_events(vec![
            ev("A", "B", "Imports", Action::Added, 1, 2),
            ev("C", "B", "Imports", Action::Added, 2, 3),
            ev("A", "B", "Imports", Action::Removed, 2, 3),
        ])
        .unwrap();
        assert_eq!(log.timeline(), &[d(1), d(2), d(3)]);
        assert_eq!(log.num_vertices(), 3);
        assert_eq!(log.vertex_first_seen(), &[1, 1, 2]);
        let b = log.vertex_id("B").unwrap();
        let c = log.vertex_id("C").unwrap();
        assert_eq!(log.edges_at(2), BTreeSet::from([(c, b)]));
    }

    #[test]
    fn empty_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "from,to,type,action,prev_date,curr_date").unwrap();
        let log = EvolutionLog::ingest(f.path(), &types(&["Imports"])).unwrap();
        assert!(log.timeline().is_empty());
        assert_eq!(log.num_vertices(), 0);
        assert_eq!(log.num_steps(), 0);
    }

    #[test]
    fn removal_of_missing_edge_is_rejected() {
        let err = EvolutionLog::from_events(vec![
            ev("A", "B", "Imports", Action::Added, 1, 2),
            ev("B", "A", "Imports", Action::Removed, 2, 3),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::InvalidEvent { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicate_addition_is_rejected() {
        let err = EvolutionLog::from_events(vec![
            ev("A", "B", "Imports", Action::Added, 1, 2),
            ev("A", "B", "Imports", Action::Added, 2, 3),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn invalid_rows_are_rejected() {
        assert!(EvolutionLog::from_events(vec![ev("A", "A", "Imports", Action::Added, 1, 2)]).is_err());
        assert!(EvolutionLog::from_events(vec![ev("A", "B", "Imports", Action::Added, 2, 2)]).is_err());
    }

    #[test]
    fn same_day_churn_cancels() {
        let log = EvolutionLog::from_events(vec![
            ev("A", "B", "Imports", Action::Added, 1, 2),
            ev("C", "B", "Imports", Action::Added, 2, 3),
            ev("C", "B", "Imports", Action::Removed, 2, 3),
            ev("A", "B", "Imports", Action::Removed, 2, 3),
            ev("A", "B", "Imports", Action::Added, 2, 3),
        ])
        .unwrap();
        assert!(log.changes_at(2).is_empty());
        assert_eq!(log.num_vertices(), 2);
    }

    #[test]
    fn merged_types_track_edge_presence() {
        let rows = vec![
            ev("A", "B", "Imports", Action::Added, 1, 2),
            ev("A", "B", "Depends", Action::Added, 2, 3),
            ev("A", "B", "Imports", Action::Removed, 3, 4),
            ev("A", "B", "Depends", Action::Removed, 4, 5),
        ];
        let log = EvolutionLog::from_events(rows.clone()).unwrap();
        assert_eq!(log.changes_at(1).len(), 1);
        assert!(log.changes_at(2).is_empty());
        assert!(log.changes_at(3).is_empty());
        assert_eq!(log.changes_at(4)[0].action, Action::Removed);

        let mut f = tempfile::NamedTempFile::new().unwrap();
        write_events(&mut f, &rows).unwrap();
        let only_imports = EvolutionLog::ingest(f.path(), &types(&["Imports"])).unwrap();
        assert_eq!(only_imports.timeline(), &[d(1), d(2), d(4)]);
        assert_eq!(only_imports.changes_at(2)[0].action, Action::Removed);
        // Deleted packages stay in the vertex set.
        assert_eq!(only_imports.vertex_count_at(2), 2);
    }

    #[test]
    fn unsorted_rows_are_time_ordered() {
        let log = EvolutionLog::from_events(vec![
            ev("C", "B", "Imports", Action::Added, 2, 3),
            ev("A", "B", "Imports", Action::Added, 1, 2),
        ])
        .unwrap();
        assert_eq!(log.vertex_name(0), "A");
        assert_eq!(log.degrees_at(2), (vec![0, 2, 0], vec![1, 0, 1]));
    }
}
