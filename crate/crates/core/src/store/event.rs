use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header of the event CSV, in column order.
pub const EVENT_HEADER: [&str; 6] = ["from", "to", "type", "action", "prev_date", "curr_date"];

/// Dependency types that appear in CRAN package metadata.
pub const KNOWN_DEP_TYPES: [&str; 5] = ["Depends", "Imports", "LinkingTo", "Suggests", "Enhances"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Added,
    Removed,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Added => "added",
            Action::Removed => "removed",
        })
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "added" => Ok(Action::Added),
            "removed" => Ok(Action::Removed),
            other => Err(format!("unknown action {other:?} (expected added or removed)")),
        }
    }
}

/// One row of the event log: a directed dependency `source -> target` that
/// was added or removed between two snapshot dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEvent {
    #[serde(rename = "from")]
    pub source: String,
    #[serde(rename = "to")]
    pub target: String,
    #[serde(rename = "type")]
    pub dep_type: String,
    pub action: Action,
    pub prev_date: NaiveDate,
    pub curr_date: NaiveDate,
}

impl EdgeEvent {
    pub fn new(
        source: impl Into<String>,
        target: impl Into<String>,
        dep_type: impl Into<String>,
        action: Action,
        prev_date: NaiveDate,
        curr_date: NaiveDate,
    ) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            dep_type: dep_type.into(),
            action,
            prev_date,
            curr_date,
        }
    }

    pub(crate) fn validate(&self, line: u64) -> Result<()> {
        let bad = |message: String| Err(Error::InvalidEvent { line, message });
        if self.source.is_empty() || self.target.is_empty() {
            return bad("empty vertex name".into());
        }
        if self.source == self.target {
            return bad(format!("self-loop on {:?}", self.source));
        }
        if self.prev_date >= self.curr_date {
            return bad(format!(
                "prev_date {} is not before curr_date {}",
                self.prev_date, self.curr_date
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    from: String,
    to: String,
    #[serde(rename = "type")]
    dep_type: String,
    action: String,
    prev_date: String,
    curr_date: String,
}

fn parse_date(s: &str, line: u64, column: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("{column}: {s:?} is not a YYYY-MM-DD date ({e})"),
    })
}

/// Reads event rows, returning each with its 1-based line number in the file.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<(u64, EdgeEvent)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);

    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let found: Vec<&str> = headers.iter().collect();
    if found != EVENT_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", EVENT_HEADER.join(","), found.join(",")),
        });
    }

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw: RawRow = record
            .deserialize(Some(&headers))
            .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let action = raw.action.parse().map_err(|message| Error::Parse { line, message })?;
        let event = EdgeEvent {
            source: raw.from,
            target: raw.to,
            dep_type: raw.dep_type,
            action,
            prev_date: parse_date(&raw.prev_date, line, "prev_date")?,
            curr_date: parse_date(&raw.curr_date, line, "curr_date")?,
        };
        out.push((line, event));
    }
    Ok(out)
}

pub fn write_events<'a, W: Write>(writer: W, events: impl IntoIterator<Item = &'a EdgeEvent>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(EVENT_HEADER)?;
    for e in events {
        wtr.write_record([
            e.source.as_str(),
            e.target.as_str(),
            e.dep_type.as_str(),
            &e.action.to_string(),
            &e.prev_date.format("%Y-%m-%d").to_string(),
            &e.curr_date.format("%Y-%m-%d").to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<event writer>", e))?;
    Ok(())
}
