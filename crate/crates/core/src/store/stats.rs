use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::panel::IncrementPanel;
use crate::error::{Error, Result};

/// Which increment is treated as the response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Internal,
    External,
    Deletion,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Internal, Category::External, Category::Deletion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Internal => "internal",
            Category::External => "external",
            Category::Deletion => "deletion",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "internal" => Ok(Category::Internal),
            "external" => Ok(Category::External),
            "deletion" => Ok(Category::Deletion),
            other => Err(Error::InvalidConfig(format!(
                "unknown category {other:?} (expected internal, external or deletion)"
            ))),
        }
    }
}

/// Degree histogram and increment counts of one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub t: usize,
    pub date: Option<NaiveDate>,
    /// `(k, slot, c_{t,k})`
    pub(crate) histogram: Vec<(u32, u32, u64)>,
    /// `(k, slot, y, n_{t,k,y})` with `y > 0`
    pub(crate) increments: Vec<(u32, u32, u64, u64)>,
    pub(crate) total: u64,
}

impl StepStats {
    /// `(k, c_{t,k})` pairs sorted by degree.
    pub fn histogram(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.histogram.iter().map(|&(k, _, c)| (k, c))
    }

    /// `(k, y, n_{t,k,y})` triples with `y > 0`, sorted by `(k, y)`.
    pub fn increments(&self) -> impl Iterator<Item = (u32, u64, u64)> + '_ {
        self.increments.iter().map(|&(k, _, y, n)| (k, y, n))
    }

    /// `A_t`, the total increment at this step.
    pub fn total_increment(&self) -> u64 {
        self.total
    }

    /// Number of existing vertices `n_{t-1}`.
    pub fn existing(&self) -> u64 {
        self.histogram.iter().map(|h| h.2).sum()
    }
}

#[derive(Debug, Clone, Default)]
struct RawStep {
    t: usize,
    date: Option<NaiveDate>,
    histogram: BTreeMap<u32, u64>,
    increments: BTreeMap<(u32, u64), u64>,
}

/// Compressed sufficient statistics of one increment category.
///
/// Steps without existing vertices carry no information and are omitted, so
/// `num_steps()` counts only steps with at least one existing vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    category: Category,
    degrees: Vec<u32>,
    steps: Vec<StepStats>,
    slot_weights: Vec<u64>,
    response_counts: Vec<(u64, u64)>,
}

impl SufficientStats {
    /// Compresses the chosen increment category of a panel into per-step histograms.
    pub fn summarize(panel: &IncrementPanel, category: Category) -> Self {
        let mut raw = Vec::with_capacity(panel.num_steps());
        panel.for_each_step(|r| {
            if r.n_prev() == 0 {
                return;
            }
            let response = match category {
                Category::Internal => r.x,
                Category::External => r.y,
                Category::Deletion => r.z,
            };
            let mut step = RawStep { t: r.t, date: Some(r.date), ..Default::default() };
            for (&k, &y) in r.k_prev.iter().zip(response) {
                *step.histogram.entry(k).or_insert(0) += 1;
                if y > 0 {
                    *step.increments.entry((k, y as u64)).or_insert(0) += 1;
                }
            }
            raw.push(step);
        });
        Self::from_raw(category, raw)
    }

    fn from_raw(category: Category, raw: Vec<RawStep>) -> Self {
        let mut degrees: Vec<u32> = raw.iter().flat_map(|s| s.histogram.keys().copied()).collect();
        degrees.sort_unstable();
        degrees.dedup();
        let slot_of = |k: u32| degrees.binary_search(&k).expect("degree present") as u32;

        let mut slot_weights = vec![0u64; degrees.len()];
        let mut responses: BTreeMap<u64, u64> = BTreeMap::new();
        let steps = raw
            .into_iter()
            .map(|s| {
                let histogram = s.histogram.iter().map(|(&k, &c)| (k, slot_of(k), c)).collect();
                let mut total = 0;
                let increments = s
                    .increments
                    .iter()
                    .map(|(&(k, y), &n)| {
                        let slot = slot_of(k);
                        slot_weights[slot as usize] += y * n;
                        *responses.entry(y).or_insert(0) += n;
                        total += y * n;
                        (k, slot, y, n)
                    })
                    .collect();
                StepStats { t: s.t, date: s.date, histogram, increments, total }
            })
            .collect();
        Self { category, degrees, steps, slot_weights, response_counts: responses.into_iter().collect() }
    }

    fn to_raw(&self) -> Vec<RawStep> {
        self.steps
            .iter()
            .map(|s| RawStep {
                t: s.t,
                date: s.date,
                histogram: s.histogram().collect(),
                increments: s.increments().map(|(k, y, n)| ((k, y), n)).collect(),
            })
            .collect()
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn steps(&self) -> &[StepStats] {
        &self.steps
    }

    /// `T`: number of informative steps.
    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// `A_T`: total increment over all steps.
    pub fn total_increment(&self) -> u64 {
        self.steps.iter().map(|s| s.total).sum()
    }

    /// Distinct degrees appearing in any histogram, ascending.
    pub fn distinct_degrees(&self) -> &[u32] {
        &self.degrees
    }

    /// Per distinct degree, `Σ_t Σ_y y·n_{t,k,y}`.
    pub(crate) fn slot_weights(&self) -> &[u64] {
        &self.slot_weights
    }

    /// `(y, Σ_{t,k} n_{t,k,y})` for every observed positive response.
    pub(crate) fn response_counts(&self) -> &[(u64, u64)] {
        &self.response_counts
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees.last().copied().unwrap_or(0)
    }

    /// Quantile of the positive degrees over all (vertex, step) pairs.
    pub fn positive_degree_quantile(&self, q: f64) -> Option<f64> {
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for s in &self.steps {
            for (k, c) in s.histogram() {
                if k > 0 {
                    *counts.entry(k).or_insert(0) += c;
                }
            }
        }
        let n: u64 = counts.values().sum();
        if n == 0 {
            return None;
        }
        let target = ((q.clamp(0.0, 1.0) * n as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (k, c) in counts {
            seen += c;
            if seen >= target {
                return Some(k as f64);
            }
        }
        unreachable!("quantile target within total count")
    }

    /// Statistics restricted to the steps whose time index satisfies `keep`.
    pub fn restrict(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let raw = self.to_raw().into_iter().filter(|s| keep(s.t)).collect();
        Self::from_raw(self.category, raw)
    }

    /// Writes the `t,k,y,count` table; rows with `y = -1` carry `c_{t,k}`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["t", "k", "y", "count"])?;
        for s in &self.steps {
            for (k, c) in s.histogram() {
                wtr.write_record([s.t.to_string(), k.to_string(), "-1".into(), c.to_string()])?;
            }
            for (k, y, n) in s.increments() {
                wtr.write_record([s.t.to_string(), k.to_string(), y.to_string(), n.to_string()])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<stats writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(file))
    }

    /// Reads a `t,k,y,count` table. `timeline`, when given, maps time indices to dates.
    pub fn read_csv<R: Read>(reader: R, category: Category, timeline: Option<&[NaiveDate]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "k", "y", "count"] {
            return Err(Error::Parse { line: 1, message: "expected header t,k,y,count".into() });
        }
        let mut steps: BTreeMap<usize, RawStep> = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let field = |i: usize| -> Result<i64> {
                record
                    .get(i)
                    .and_then(|v| v.parse::<i64>().ok())
                    .ok_or_else(|| Error::Parse { line, message: format!("column {} is not an integer", i + 1) })
            };
            let (t, k, y, count) = (field(0)?, field(1)?, field(2)?, field(3)?);
            if t < 1 || k < 0 || count < 0 || y == 0 || y < -1 {
                return Err(Error::Parse { line, message: "value out of range".into() });
            }
            let date = match timeline {
                Some(tl) => Some(*tl.get(t as usize).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("time index {t} is beyond the timeline"),
                })?),
                None => None,
            };
            let step = steps.entry(t as usize).or_insert_with(|| RawStep { t: t as usize, date, ..Default::default() });
            if y == -1 {
                *step.histogram.entry(k as u32).or_insert(0) += count as u64;
            } else {
                *step.increments.entry((k as u32, y as u64)).or_insert(0) += count as u64;
            }
        }
        for s in steps.values() {
            let mut per_degree: BTreeMap<u32, u64> = BTreeMap::new();
            for (&(k, _), &n) in &s.increments {
                *per_degree.entry(k).or_insert(0) += n;
            }
            for (k, n) in per_degree {
                if n > s.histogram.get(&k).copied().unwrap_or(0) {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("step {}: more incremented vertices than vertices at degree {k}", s.t),
                    });
                }
            }
        }
        Ok(Self::from_raw(category, steps.into_values().collect()))
    }

    pub fn load(path: impl AsRef<Path>, category: Category, timeline: Option<&[NaiveDate]>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file), category, timeline)
    }
}

/// Writes the `t,date` table mapping time indices to calendar dates.
pub fn write_timeline<W: Write>(writer: W, timeline: &[NaiveDate]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["t", "date"])?;
    for (t, d) in timeline.iter().enumerate() {
        wtr.write_record([t.to_string(), d.format("%Y-%m-%d").to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<timeline writer>", e))?;
    Ok(())
}

pub fn read_timeline<R: Read>(reader: R) -> Result<Vec<NaiveDate>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        let t: usize = record
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse { line, message: "bad time index".into() })?;
        if t != out.len() {
            return Err(Error::Parse { line, message: format!("expected time index {}", out.len()) });
        }
        let d = record
            .get(1)
            .and_then(|v| NaiveDate::parse_from_str(v.trim(), "%Y-%m-%d").ok())
            .ok_or_else(|| Error::Parse { line, message: "bad date".into() })?;
        out.push(d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Action, EdgeEvent, EvolutionLog};

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, day).unwrap()
    }

    /// Three existing vertices with in-degrees [1, 1, 2]; one of the degree-1
    /// vertices gains an external edge.
    fn fixture() -> EvolutionLog {
        let ev = |s: &str, t: &str, a, day| EdgeEvent::new(s, t, "Imports", a, d(day - 1), d(day));
        EvolutionLog::from_events(vec![
            ev("a", "P", Action::Added, 2),
            ev("b", "Q", Action::Added, 2),
            ev("c", "R", Action::Added, 2),
            ev("d", "R", Action::Added, 2),
            ev("new", "P", Action::Added, 3),
        ])
        .unwrap()
    }

    #[test]
    fn direct_count() {
        let log = fixture();
        let panel = IncrementPanel::extract(&log);
        let stats = SufficientStats::summarize(&panel, Category::External);
        // Step 1 has no existing vertices and is dropped.
        assert_eq!(stats.num_steps(), 1);
        let step = &stats.steps()[0];
        // P, Q, R have degrees 1, 1, 2; a..d have degree 0.
        let hist: Vec<_> = step.histogram().collect();
        assert_eq!(hist, vec![(0, 4), (1, 2), (2, 1)]);
        assert_eq!(step.increments().collect::<Vec<_>>(), vec![(1, 1, 1)]);
        assert_eq!(step.total_increment(), 1);
        assert_eq!(step.existing(), 7);
    }

    #[test]
    fn all_zero_increments() {
        let panel = IncrementPanel::extract(&fixture());
        let stats = SufficientStats::summarize(&panel, Category::Deletion);
        assert_eq!(stats.steps()[0].increments().count(), 0);
        assert_eq!(stats.total_increment(), 0);
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let panel = IncrementPanel::extract(&fixture());
        let stats = SufficientStats::summarize(&panel, Category::External);
        let mut buf = Vec::new();
        stats.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "t,k,y,count\n2,0,-1,4\n2,1,-1,2\n2,2,-1,1\n2,1,1,1\n");
        let back = SufficientStats::read_csv(buf.as_slice(), Category::External, Some(panel.timeline())).unwrap();
        assert_eq!(back, stats);

        let bad = "t,k,y,count\n1,3,-1,1\n1,3,1,2\n";
        assert!(SufficientStats::read_csv(bad.as_bytes(), Category::External, None).is_err());
        let bad = "t,k,y,count\n1,3,0,1\n";
        assert!(SufficientStats::read_csv(bad.as_bytes(), Category::External, None).is_err());
    }

    #[test]
    fn timeline_round_trip() {
        let tl = vec![d(1), d(4), d(9)];
        let mut buf = Vec::new();
        write_timeline(&mut buf, &tl).unwrap();
        assert_eq!(read_timeline(buf.as_slice()).unwrap(), tl);
    }

    #[test]
    fn quantiles_of_positive_degrees() {
        let panel = IncrementPanel::extract(&fixture());
        let stats = SufficientStats::summarize(&panel, Category::External);
        assert_eq!(stats.positive_degree_quantile(0.5), Some(1.0));
        assert_eq!(stats.positive_degree_quantile(1.0), Some(2.0));
    }
}
