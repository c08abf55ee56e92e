//! Outlier screening, gap imputation and season slicing.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{mean_std, median, Scalar};
use crate::timeseries::{midnight, HourlySeries};

/// Hours in one week; the long-gap imputation looks back this far.
pub const WEEK_HOURS: usize = 168;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Replacement {
    TreatAsMissing,
    DatasetMedian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierPolicy {
    pub z_threshold: f64,
    pub replacement: Replacement,
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        Self {
            z_threshold: 3.0,
            replacement: Replacement::TreatAsMissing,
        }
    }
}

impl OutlierPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_threshold > 0.0) {
            return Err(Error::InvalidParam(format!(
                "z_threshold must be positive, got {}",
                self.z_threshold
            )));
        }
        Ok(())
    }
}

/// Flags load values whose global z-score exceeds the policy threshold.
///
/// Mean and population standard deviation are taken over non-missing values.
/// Missing values are never flagged; a zero-variance series flags nothing.
pub fn detect_outliers<T: Scalar>(series: &HourlySeries<T>, policy: &OutlierPolicy) -> Result<Vec<bool>> {
    policy.validate()?;
    let observed: Vec<T> = series.load().iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::AllMissing);
    }
    let (mean, std) = mean_std(&observed).expect("non-empty");
    if observed.len() < 2 || std <= T::zero() {
        return Ok(vec![false; series.len()]);
    }
    let threshold = T::of(policy.z_threshold);
    Ok(series
        .load()
        .iter()
        .map(|v| v.is_some_and(|x| ((x - mean) / std).abs() > threshold))
        .collect())
}

/// Replaces flagged load values; unflagged entries are returned untouched.
pub fn replace_outliers<T: Scalar>(
    series: &HourlySeries<T>,
    mask: &[bool],
    policy: &OutlierPolicy,
) -> Result<HourlySeries<T>> {
    if mask.len() != series.len() {
        return Err(Error::LengthMismatch {
            expected: series.len(),
            actual: mask.len(),
        });
    }
    if !mask.iter().any(|&m| m) {
        return Ok(series.clone());
    }
    let fill = match policy.replacement {
        Replacement::TreatAsMissing => None,
        Replacement::DatasetMedian => {
            let observed: Vec<T> = series.load().iter().flatten().copied().collect();
            Some(median(&observed).ok_or(Error::AllMissing)?)
        }
    };
    let load = series
        .load()
        .iter()
        .zip(mask)
        .map(|(&v, &flagged)| if flagged { fill } else { v })
        .collect();
    series.with_load(load)
}

fn impute_channel<T: Scalar>(
    values: &[Option<T>],
    short_gap_max: usize,
    channel: &'static str,
) -> Result<Vec<Option<T>>> {
    let mut out = values.to_vec();
    let mut i = 0;
    while i < values.len() {
        if values[i].is_some() {
            i += 1;
            continue;
        }
        let gap_start = i;
        while i < values.len() && values[i].is_none() {
            i += 1;
        }
        if gap_start == 0 {
            return Err(Error::Unfillable { channel, index: 0 });
        }
        let long = i - gap_start > short_gap_max;
        for t in gap_start..i {
            let weekly = if long && t >= WEEK_HOURS { values[t - WEEK_HOURS] } else { None };
            out[t] = weekly.or(out[t - 1]);
        }
    }
    Ok(out)
}

/// Fills every missing load and temperature value.
///
/// Gaps of at most `short_gap_max` hours carry the previous hour forward.
/// Longer gaps take the observed value from the same hour one week earlier,
/// falling back to the previous hour when that is missing too.
pub fn impute<T: Scalar>(series: &HourlySeries<T>, short_gap_max: usize) -> Result<HourlySeries<T>> {
    let load = impute_channel(series.load(), short_gap_max, "load")?;
    let temperature = impute_channel(series.temperature(), short_gap_max, "temperature")?;
    series.with_channels(load, temperature)
}

/// Inclusive calendar-date range with a label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonRange {
    pub name: String,
    #[serde(with = "crate::timeseries::calendar_date")]
    pub start_date: NaiveDate,
    #[serde(with = "crate::timeseries::calendar_date")]
    pub end_date: NaiveDate,
}

impl SeasonRange {
    pub fn new(name: impl Into<String>, start_date: NaiveDate, end_date: NaiveDate) -> Result<Self> {
        let range = Self {
            name: name.into(),
            start_date,
            end_date,
        };
        range.validate()?;
        Ok(range)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_date > self.end_date {
            return Err(Error::InvalidParam(format!(
                "season `{}` starts after it ends",
                self.name
            )));
        }
        Ok(())
    }
}

/// Slices the hours whose UTC date falls inside `range`.
pub fn slice_season<T: Scalar>(series: &HourlySeries<T>, range: &SeasonRange) -> HourlySeries<T> {
    let from = midnight(range.start_date);
    let to = midnight(range.end_date + chrono::Days::new(1));
    let offset = |ts: chrono::DateTime<chrono::Utc>| {
        ((ts - series.start()).num_hours().max(0) as usize).min(series.len())
    };
    let (a, b) = (offset(from), offset(to));
    if a >= b {
        log::warn!(
            "season `{}` ({} .. {}) does not overlap the series",
            range.name,
            range.start_date,
            range.end_date
        );
        let empty = HourlySeries::new(from.max(series.start()), Vec::new(), Vec::new());
        return empty.expect("midnight is hour aligned");
    }
    series.slice(a..b)
}

/// Independent slice per range, keyed by range name.
pub fn split_seasons<T: Scalar>(
    series: &HourlySeries<T>,
    ranges: &[SeasonRange],
) -> Result<BTreeMap<String, HourlySeries<T>>> {
    let mut out = BTreeMap::new();
    for range in ranges {
        range.validate()?;
        out.insert(range.name.clone(), slice_season(series, range));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Utc};

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2023-09-23T00:00:00Z").unwrap().with_timezone(&Utc)
    }

    fn series(load: &[Option<f64>]) -> HourlySeries<f64> {
        HourlySeries::new(t0(), load.to_vec(), vec![Some(10.0); load.len()]).unwrap()
    }

    fn full(load: &[f64]) -> HourlySeries<f64> {
        series(&load.iter().copied().map(Some).collect::<Vec<_>>())
    }

    #[test]
    fn constant_series_has_no_outliers() {
        let mask = detect_outliers(&full(&[2.0; 4]), &OutlierPolicy::default()).unwrap();
        assert_eq!(mask, vec![false; 4]);
    }

    #[test]
    fn single_spike_is_flagged() {
        let mut v = vec![1.0; 99];
        v.push(100.0);
        let mask = detect_outliers(&full(&v), &OutlierPolicy::default()).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 1);
        assert!(mask[99]);
    }

    #[test]
    fn missing_never_flagged_and_all_missing_rejected() {
        let mut v: Vec<Option<f64>> = vec![Some(1.0); 99];
        v.push(Some(100.0));
        v.push(None);
        let mask = detect_outliers(&series(&v), &OutlierPolicy::default()).unwrap();
        assert!(!mask[100]);
        assert!(matches!(
            detect_outliers(&series(&[None, None]), &OutlierPolicy::default()),
            Err(Error::AllMissing)
        ));
    }

    #[test]
    fn median_replacement() {
        let s = full(&[1.0, 1.0, 100.0, 1.0]);
        let policy = OutlierPolicy {
            replacement: Replacement::DatasetMedian,
            ..Default::default()
        };
        let out = replace_outliers(&s, &[false, false, true, false], &policy).unwrap();
        assert_eq!(out.complete_load().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn missing_replacement_and_noop() {
        let s = full(&[1.0, 1.0, 100.0, 1.0]);
        let out = replace_outliers(&s, &[false, false, true, false], &OutlierPolicy::default()).unwrap();
        assert_eq!(out.load(), &[Some(1.0), Some(1.0), None, Some(1.0)]);
        let same = replace_outliers(&s, &[false; 4], &OutlierPolicy::default()).unwrap();
        assert_eq!(same, s);
        assert!(replace_outliers(&s, &[false; 3], &OutlierPolicy::default()).is_err());
    }

    #[test]
    fn short_gap_uses_previous_hour() {
        let s = series(&[Some(0.5), Some(0.8), None, Some(0.3)]);
        let out = impute(&s, 2).unwrap();
        assert_eq!(out.load()[2], Some(0.8));
    }

    #[test]
    fn long_gap_uses_previous_week() {
        let n = WEEK_HOURS + 60;
        let mut v: Vec<Option<f64>> = (0..n).map(|i| Some(i as f64)).collect();
        for x in v.iter_mut().skip(WEEK_HOURS + 10).take(30) {
            *x = None;
        }
        let out = impute(&series(&v), 2).unwrap();
        for t in WEEK_HOURS + 10..WEEK_HOURS + 40 {
            assert_eq!(out.load()[t], Some((t - WEEK_HOURS) as f64));
        }
        assert_eq!(out.missing_load(), 0);
    }

    #[test]
    fn long_gap_without_history_chains_previous_hour() {
        let mut v: Vec<Option<f64>> = vec![Some(2.0); 20];
        for x in v.iter_mut().skip(5).take(10) {
            *x = None;
        }
        let out = impute(&series(&v), 2).unwrap();
        assert_eq!(out.complete_load().unwrap(), vec![2.0; 20]);
    }

    #[test]
    fn leading_gap_is_rejected() {
        let r = impute(&series(&[None, Some(1.0)]), 2);
        assert!(matches!(r, Err(Error::Unfillable { channel: "load", index: 0 })));
    }

    #[test]
    fn complete_series_is_unchanged() {
        let s = full(&[1.0, 2.0, 3.0]);
        assert_eq!(impute(&s, 2).unwrap(), s);
    }

    #[test]
    fn season_slicing_by_date() {
        let n = 24 * 10;
        let s = full(&vec![1.0; n]);
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let range = SeasonRange::new("a", d(2023, 9, 25), d(2023, 9, 26)).unwrap();
        let out = split_seasons(&s, &[range]).unwrap();
        let a = &out["a"];
        assert_eq!(a.len(), 48);
        assert_eq!(a.start(), midnight(d(2023, 9, 25)));
        let whole = SeasonRange::new("all", d(2023, 1, 1), d(2024, 1, 1)).unwrap();
        assert_eq!(slice_season(&s, &whole), s);
        let outside = SeasonRange::new("none", d(2025, 1, 1), d(2025, 2, 1)).unwrap();
        assert!(slice_season(&s, &outside).is_empty());
        assert!(SeasonRange::new("bad", d(2024, 2, 1), d(2024, 1, 1)).is_err());
    }
}
