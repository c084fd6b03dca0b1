use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::panel::IncrementPanel;
use super::stats::SufficientStats;
use crate::error::{Error, Result};

/// Rule for grouping time points into periods of the hierarchical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodScheme {
    /// Calendar months of the time points' dates.
    Monthly,
    /// Consecutive blocks of `w` time points; the last block may be shorter.
    FixedWidth(usize),
}

impl FromStr for PeriodScheme {
    type Err = Error;

    /// Accepts `monthly` or `fixed:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "monthly" {
            return Ok(PeriodScheme::Monthly);
        }
        s.strip_prefix("fixed:")
            .and_then(|w| w.parse().ok())
            .map(PeriodScheme::FixedWidth)
            .ok_or_else(|| Error::InvalidPeriod(format!("{s:?} (expected monthly or fixed:<width>)")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Period {
    pub index: usize,
    pub time_indices: Vec<usize>,
}

impl Period {
    /// `T_s`
    pub fn len(&self) -> usize {
        self.time_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_indices.is_empty()
    }
}

/// Splits time points `(t, date)` into contiguous, non-overlapping periods.
pub fn partition_periods(points: &[(usize, Option<NaiveDate>)], scheme: PeriodScheme) -> Result<Vec<Period>> {
    if points.is_empty() {
        return Err(Error::InvalidPeriod("no time points to partition".into()));
    }
    let mut periods: Vec<Period> = Vec::new();
    match scheme {
        PeriodScheme::FixedWidth(0) => return Err(Error::InvalidPeriod("width must be at least 1".into())),
        PeriodScheme::FixedWidth(w) => {
            for (i, chunk) in points.chunks(w).enumerate() {
                periods.push(Period { index: i, time_indices: chunk.iter().map(|p| p.0).collect() });
            }
        }
        PeriodScheme::Monthly => {
            let mut current: Option<(i32, u32)> = None;
            for &(t, date) in points {
                let date = date.ok_or_else(|| {
                    Error::InvalidPeriod("monthly periods need dates; supply the timeline".into())
                })?;
                let key = (date.year(), date.month());
                if current != Some(key) {
                    periods.push(Period { index: periods.len(), time_indices: Vec::new() });
                    current = Some(key);
                }
                periods.last_mut().expect("pushed above").time_indices.push(t);
            }
        }
    }
    if let Some(p) = periods.iter().find(|p| p.is_empty()) {
        return Err(Error::InvalidPeriod(format!("period {} is empty", p.index)));
    }
    Ok(periods)
}

impl IncrementPanel {
    pub fn partition_periods(&self, scheme: PeriodScheme) -> Result<Vec<Period>> {
        let points: Vec<_> = (1..=self.num_steps()).map(|t| (t, Some(self.timeline()[t]))).collect();
        partition_periods(&points, scheme)
    }
}

impl SufficientStats {
    /// Per-period statistics over the informative steps.
    pub fn split_periods(&self, scheme: PeriodScheme) -> Result<(Vec<Period>, Vec<SufficientStats>)> {
        let points: Vec<_> = self.steps().iter().map(|s| (s.t, s.date)).collect();
        let periods = partition_periods(&points, scheme)?;
        let stats = periods
            .iter()
            .map(|p| {
                let (lo, hi) = (p.time_indices[0], *p.time_indices.last().expect("non-empty"));
                self.restrict(|t| (lo..=hi).contains(&t))
            })
            .collect();
        Ok((periods, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn daily(n: usize, start: NaiveDate) -> Vec<(usize, Option<NaiveDate>)> {
        (0..n).map(|i| (i + 1, Some(start + chrono::Days::new(i as u64)))).collect()
    }

    #[test]
    fn fixed_width_even_split() {
        let pts = daily(60, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        let p = partition_periods(&pts, PeriodScheme::FixedWidth(30)).unwrap();
        assert_eq!(p.iter().map(Period::len).collect::<Vec<_>>(), vec![30, 30]);
        assert_eq!(p[1].time_indices[0], 31);
    }

    #[test]
    fn fixed_width_truncates_to_one_period() {
        let pts = daily(60, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        let p = partition_periods(&pts, PeriodScheme::FixedWidth(90)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].len(), 60);
    }

    #[test]
    fn monthly_splits_at_month_boundary() {
        let pts = daily(45, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        let p = partition_periods(&pts, PeriodScheme::Monthly).unwrap();
        assert_eq!(p.iter().map(Period::len).collect::<Vec<_>>(), vec![31, 14]);
        assert_eq!(p.iter().map(Period::len).sum::<usize>(), 45);
    }

    #[test]
    fn invalid_schemes() {
        let pts = daily(5, NaiveDate::from_ymd_opt(2021, 1, 1).unwrap());
        assert!(partition_periods(&pts, PeriodScheme::FixedWidth(0)).is_err());
        assert!(partition_periods(&[], PeriodScheme::Monthly).is_err());
        assert!(partition_periods(&[(1, None)], PeriodScheme::Monthly).is_err());
        assert_eq!("fixed:7".parse::<PeriodScheme>().unwrap(), PeriodScheme::FixedWidth(7));
        assert_eq!("Monthly".parse::<PeriodScheme>().unwrap(), PeriodScheme::Monthly);
        assert!("weekly".parse::<PeriodScheme>().is_err());
    }
}
